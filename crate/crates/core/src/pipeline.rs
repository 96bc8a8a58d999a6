//! Glue shared by the command line and end-to-end checks: corpus → vocabulary →
//! vectors → mixture, plus helpers that label pages and sessions.

use std::collections::HashMap;

use crate::analysis::{cluster_separation, TimedVector};
use crate::corpus::{build_vocabulary, filter_short_sessions, PageToken, SessionCorpus, Vocabulary};
use crate::embedding::{train_with_stats, EmbeddingMatrix, TrainConfig, TrainStats};
use crate::error::{Error, Result};
use crate::intent::session_vector;
use crate::mixture::{fit, label, FitConfig, IntentModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusParams {
    pub min_len: usize,
    pub min_count: u64,
    pub sampling_power: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            min_len: crate::corpus::DEFAULT_MIN_SESSION_LEN,
            min_count: 1,
            sampling_power: crate::corpus::DEFAULT_SAMPLING_POWER,
        }
    }
}

/// Filtered corpus with its vocabulary and trained vectors.
#[derive(Debug, Clone)]
pub struct TrainedCorpus {
    pub corpus: SessionCorpus,
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingMatrix,
    pub stats: TrainStats,
}

pub fn prepare_and_train(
    corpus: &SessionCorpus,
    params: &CorpusParams,
    train_cfg: &TrainConfig,
) -> Result<TrainedCorpus> {
    let corpus = filter_short_sessions(corpus, params.min_len)?;
    if corpus.is_empty() {
        return Err(Error::Empty(format!(
            "no session has at least {} pages",
            params.min_len
        )));
    }
    let vocab = build_vocabulary(&corpus, params.min_count, params.sampling_power)?;
    let outcome = train_with_stats(&corpus, &vocab, train_cfg)?;
    Ok(TrainedCorpus {
        corpus,
        vocab,
        embeddings: outcome.embeddings,
        stats: outcome.stats,
    })
}

/// Most likely intent of every page vector, keyed by token.
pub fn page_label_map(
    model: &IntentModel,
    tokens: &[PageToken],
    embeddings: &EmbeddingMatrix,
) -> Result<HashMap<PageToken, usize>> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| Ok((t.clone(), label(model, &embeddings.vector_f64(i))?)))
        .collect()
}

/// Session vectors of every inferable session, tagged with user and time.
pub fn timed_session_vectors(
    corpus: &SessionCorpus,
    embeddings: &EmbeddingMatrix,
    vocab: &Vocabulary,
) -> Vec<TimedVector> {
    corpus
        .sessions
        .iter()
        .filter_map(|s| {
            session_vector(s, embeddings, vocab).ok().map(|sv| TimedVector {
                user_id: s.user_id.clone(),
                start_time: s.start_time,
                vector: sv.v,
            })
        })
        .collect()
}

/// Fits a mixture to the page vectors and returns it with the mean silhouette
/// of the page vectors under the mixture's labels.
pub fn mixture_structure(embeddings: &EmbeddingMatrix, cfg: &FitConfig) -> Result<(IntentModel, f64)> {
    let rows = embeddings.rows_f64();
    let model = fit(&rows, cfg)?;
    let labels = rows
        .iter()
        .map(|v| label(&model, v))
        .collect::<Result<Vec<_>>>()?;
    let score = cluster_separation(&rows, &labels)?;
    Ok((model, score))
}
