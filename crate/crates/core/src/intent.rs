//! Session-level intent inference: mean page vector, then mixture posterior.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Session, SessionCorpus, Vocabulary};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::mixture::{responsibilities, IntentDistribution, IntentModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionVector {
    pub v: Vec<f64>,
    pub n_pages_used: usize,
    pub n_pages_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionIntent {
    pub user_id: String,
    pub start_time: u64,
    pub label: usize,
    pub distribution: Vec<f64>,
    pub n_pages_used: usize,
    pub n_pages_dropped: usize,
}

impl SessionIntent {
    pub fn distribution(&self) -> IntentDistribution {
        IntentDistribution {
            probs: self.distribution.clone(),
        }
    }
}

fn check_alignment(embeddings: &EmbeddingMatrix, vocab: &Vocabulary) -> Result<()> {
    if embeddings.n_pages() != vocab.len() {
        return Err(Error::format(
            "embeddings",
            format!(
                "{} vectors for a vocabulary of {} pages",
                embeddings.n_pages(),
                vocab.len()
            ),
        ));
    }
    Ok(())
}

/// Arithmetic mean of the vectors of the session's in-vocabulary pages.
pub fn session_vector(
    session: &Session,
    embeddings: &EmbeddingMatrix,
    vocab: &Vocabulary,
) -> Result<SessionVector> {
    check_alignment(embeddings, vocab)?;
    let mut v = vec![0.0f64; embeddings.dim()];
    let mut used = 0;
    for id in session.pages.iter().filter_map(|p| vocab.id(p)) {
        for (acc, x) in v.iter_mut().zip(embeddings.vector(id)) {
            *acc += f64::from(*x);
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Uninferable);
    }
    v.iter_mut().for_each(|x| *x /= used as f64);
    Ok(SessionVector {
        v,
        n_pages_used: used,
        n_pages_dropped: session.len() - used,
    })
}

pub fn infer_intent(
    session: &Session,
    embeddings: &EmbeddingMatrix,
    vocab: &Vocabulary,
    model: &IntentModel,
) -> Result<SessionIntent> {
    let sv = session_vector(session, embeddings, vocab)?;
    let dist = responsibilities(model, &sv.v)?;
    Ok(SessionIntent {
        user_id: session.user_id.clone(),
        start_time: session.start_time,
        label: dist.label(),
        distribution: dist.probs,
        n_pages_used: sv.n_pages_used,
        n_pages_dropped: sv.n_pages_dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceFailure {
    pub session_index: usize,
    pub user_id: String,
    pub start_time: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchInference {
    /// `(session index, intent)` in corpus order.
    pub intents: Vec<(usize, SessionIntent)>,
    pub failures: Vec<InferenceFailure>,
}

impl BatchInference {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (_, intent) in &self.intents {
            serde_json::to_writer(&mut w, intent).map_err(|e| Error::format("inference output", e))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.intents.iter().map(|(_, i)| i.label).collect()
    }
}

/// Infers every session; sessions that cannot be inferred are reported, not fatal.
pub fn batch_infer(
    corpus: &SessionCorpus,
    embeddings: &EmbeddingMatrix,
    vocab: &Vocabulary,
    model: &IntentModel,
) -> Result<BatchInference> {
    check_alignment(embeddings, vocab)?;
    if model.dim() != embeddings.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: embeddings.dim(),
        });
    }
    let results: Vec<Result<SessionIntent>> = corpus
        .sessions
        .par_iter()
        .map(|s| infer_intent(s, embeddings, vocab, model))
        .collect();
    let mut out = BatchInference::default();
    for (i, (session, result)) in corpus.sessions.iter().zip(results).enumerate() {
        match result {
            Ok(intent) => out.intents.push((i, intent)),
            Err(e) => out.failures.push(InferenceFailure {
                session_index: i,
                user_id: session.user_id.clone(),
                start_time: session.start_time,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, PageToken};
    use crate::mixture::{FitStats, IntentModel};
    use proptest::prelude::*;

    fn session(pages: &[&str]) -> Session {
        Session::new("u", 10, pages.iter().map(|p| PageToken::new(*p).unwrap()).collect()).unwrap()
    }

    /// Vocabulary over pages a, b, c (ids by descending count: a, b, c) with hand-set vectors.
    fn fixture() -> (Vocabulary, EmbeddingMatrix) {
        let corpus = SessionCorpus::new(vec![session(&["a", "a", "a", "b", "b", "c"])], "t");
        let vocab = build_vocabulary(&corpus, 1, 0.75).unwrap();
        let emb = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, -1.0]]).unwrap();
        (vocab, emb)
    }

    fn two_component_model() -> IntentModel {
        IntentModel::new(
            vec![0.4, 0.6],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.5, 0.5], vec![0.3, 0.7]],
            1e-6,
            FitStats::default(),
        )
        .unwrap()
    }

    #[test]
    fn mean_of_page_vectors() {
        let (vocab, emb) = fixture();
        let sv = session_vector(&session(&["c"]), &emb, &vocab).unwrap();
        assert_eq!(sv.v, vec![3.0, -1.0]);
        let sv = session_vector(&session(&["a", "b", "zzz"]), &emb, &vocab).unwrap();
        assert_eq!(sv.v, vec![0.5, 0.5]);
        assert_eq!((sv.n_pages_used, sv.n_pages_dropped), (2, 1));
        assert!(matches!(
            session_vector(&session(&["x", "y"]), &emb, &vocab),
            Err(Error::Uninferable)
        ));
    }

    #[test]
    fn single_page_session_matches_page_posterior() {
        let (vocab, emb) = fixture();
        let model = two_component_model();
        for page in ["a", "b", "c"] {
            let intent = infer_intent(&session(&[page]), &emb, &vocab, &model).unwrap();
            let direct = responsibilities(&model, &emb.vector_f64(vocab.id_of_str(page).unwrap())).unwrap();
            assert_eq!(intent.distribution, direct.probs);
            assert_eq!(intent.label, direct.label());
        }
    }

    #[test]
    fn single_component_model() {
        let (vocab, emb) = fixture();
        let model = IntentModel::new(vec![1.0], vec![vec![0.0, 0.0]], vec![vec![1.0, 1.0]], 1e-6, FitStats::default()).unwrap();
        let intent = infer_intent(&session(&["a", "c"]), &emb, &vocab, &model).unwrap();
        assert_eq!(intent.distribution, vec![1.0]);
        assert_eq!(intent.label, 0);
    }

    #[test]
    fn batch_conservation_and_failures() {
        let (vocab, emb) = fixture();
        let model = two_component_model();
        let empty = batch_infer(&SessionCorpus::default(), &emb, &vocab, &model).unwrap();
        assert!(empty.intents.is_empty() && empty.failures.is_empty());

        let oov = SessionCorpus::new(vec![session(&["x"]), session(&["y", "z"])], "t");
        let out = batch_infer(&oov, &emb, &vocab, &model).unwrap();
        assert!(out.intents.is_empty());
        assert_eq!(out.failures.len(), 2);

        let mixed = SessionCorpus::new(vec![session(&["a"]), session(&["q"]), session(&["b", "c"])], "t");
        let out = batch_infer(&mixed, &emb, &vocab, &model).unwrap();
        assert_eq!(out.intents.len() + out.failures.len(), 3);
        assert_eq!(out.intents.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(out.failures[0].session_index, 1);
    }

    #[test]
    fn inference_leaves_inputs_untouched() {
        let (vocab, emb) = fixture();
        let model = two_component_model();
        let (emb_before, model_before) = (emb.clone(), model.clone());
        let corpus = SessionCorpus::new(vec![session(&["a", "b"]), session(&["c"])], "t");
        batch_infer(&corpus, &emb, &vocab, &model).unwrap();
        assert_eq!(emb.input_bytes(), emb_before.input_bytes());
        assert_eq!(model, model_before);
    }

    #[test]
    fn jsonl_output_fields() {
        let (vocab, emb) = fixture();
        let corpus = SessionCorpus::new(vec![session(&["a", "q"])], "t");
        let out = batch_infer(&corpus, &emb, &vocab, &two_component_model()).unwrap();
        let mut buf = Vec::new();
        out.write_jsonl(&mut buf).unwrap();
        let line: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for key in ["user_id", "start_time", "label", "distribution", "n_pages_used", "n_pages_dropped"] {
            assert!(line.get(key).is_some(), "{key}");
        }
        assert_eq!(line["n_pages_dropped"], 1);
    }

    proptest! {
        #[test]
        fn session_vector_is_permutation_invariant(
            pages in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "x"]), 1..12),
            shuffle_seed in any::<u64>(),
        ) {
            let (vocab, emb) = fixture();
            prop_assume!(pages.iter().any(|p| *p != "x"));
            let mut shuffled = pages.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut crate::rng::rng(shuffle_seed));
            let a = session_vector(&session(&pages), &emb, &vocab).unwrap();
            let b = session_vector(&session(&shuffled), &emb, &vocab).unwrap();
            let doubled: Vec<&str> = pages.iter().chain(pages.iter()).copied().collect();
            let c = session_vector(&session(&doubled), &emb, &vocab).unwrap();
            for ((x, y), z) in a.v.iter().zip(&b.v).zip(&c.v) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((x - z).abs() < 1e-12);
            }
            let dist = infer_intent(&session(&pages), &emb, &vocab, &two_component_model()).unwrap();
            prop_assert!((dist.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
