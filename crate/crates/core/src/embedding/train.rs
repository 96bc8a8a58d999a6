//! SGD training of page vectors (skip-gram and CBOW, both with negative sampling).
//!
//! Workers share the parameter matrices and update them without locks. Entries
//! are stored as relaxed atomics so concurrent updates are racy but defined;
//! with one worker the result is a pure function of the seed.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use super::{Algorithm, EmbeddingMatrix, TrainConfig};
use crate::corpus::{SessionCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{rng, sub_seed, StageRng};

use super::sgns::log_sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    /// SGNS pairs or CBOW positions processed across all epochs.
    pub units_processed: u64,
    /// Mean per-unit negative-sampling loss, one entry per epoch.
    pub epoch_mean_loss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub embeddings: EmbeddingMatrix,
    pub stats: TrainStats,
}

struct SharedMatrix {
    cells: Vec<AtomicU32>,
    dim: usize,
}

impl SharedMatrix {
    fn from_values(values: impl IntoIterator<Item = f32>, dim: usize) -> Self {
        SharedMatrix {
            cells: values.into_iter().map(|x| AtomicU32::new(x.to_bits())).collect(),
            dim,
        }
    }

    #[inline]
    fn get(&self, row: usize, d: usize) -> f32 {
        f32::from_bits(self.cells[row * self.dim + d].load(Ordering::Relaxed))
    }

    #[inline]
    fn add(&self, row: usize, d: usize, delta: f32) {
        let cell = &self.cells[row * self.dim + d];
        let v = f32::from_bits(cell.load(Ordering::Relaxed)) + delta;
        cell.store(v.to_bits(), Ordering::Relaxed);
    }

    fn read_row(&self, row: usize, buf: &mut [f32]) {
        for (d, b) in buf.iter_mut().enumerate() {
            *b = self.get(row, d);
        }
    }

    fn into_values(self) -> Vec<f32> {
        self.cells
            .into_iter()
            .map(|c| f32::from_bits(c.into_inner()))
            .collect()
    }
}

/// Enumerates (center, context) positions with `|center − context| ≤ window`.
pub(crate) fn window_pairs(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |t| {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(len.saturating_sub(1));
        (lo..=hi).filter(move |&j| j != t).map(move |j| (t, j))
    })
}

fn units_per_epoch(sentences: &[Vec<usize>], window: usize, algorithm: Algorithm) -> u64 {
    sentences
        .iter()
        .map(|s| match algorithm {
            Algorithm::Sgns => window_pairs(s.len(), window).count() as u64,
            Algorithm::Cbow if s.len() > 1 => s.len() as u64,
            Algorithm::Cbow => 0,
        })
        .sum()
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    input: SharedMatrix,
    output: SharedMatrix,
    sampler: WeightedAliasIndex<f64>,
    keep_prob: Option<Vec<f64>>,
    processed: AtomicU64,
    total_units: u64,
}

impl Trainer<'_> {
    fn lr(&self) -> f32 {
        let done = self.processed.load(Ordering::Relaxed) as f64;
        let frac = (done / self.total_units.max(1) as f64).min(1.0);
        (self.cfg.lr_start - (self.cfg.lr_start - self.cfg.lr_end) * frac) as f32
    }

    /// One logistic step for `hidden` against output row `target`; accumulates the
    /// hidden-side gradient into `grad` and returns the term's loss.
    #[inline]
    fn logistic_step(&self, hidden: &[f32], target: usize, label: bool, lr: f32, grad: &mut [f32]) -> f64 {
        let dim = self.cfg.dim;
        let mut score = 0.0f32;
        for d in 0..dim {
            score += hidden[d] * self.output.get(target, d);
        }
        let score = f64::from(score);
        let (loss, coef) = if label {
            (-log_sigmoid(score), 1.0 - super::sigmoid(score))
        } else {
            (-log_sigmoid(-score), -super::sigmoid(score))
        };
        let g = coef as f32 * lr;
        for d in 0..dim {
            grad[d] += g * self.output.get(target, d);
            self.output.add(target, d, g * hidden[d]);
        }
        loss
    }

    fn negatives_step(
        &self,
        rng: &mut StageRng,
        hidden: &[f32],
        positive: usize,
        lr: f32,
        grad: &mut [f32],
    ) -> f64 {
        let mut loss = self.logistic_step(hidden, positive, true, lr, grad);
        for _ in 0..self.cfg.negatives {
            let neg = self.sampler.sample(rng);
            if neg == positive {
                continue;
            }
            loss += self.logistic_step(hidden, neg, false, lr, grad);
        }
        loss
    }

    fn subsampled(&self, rng: &mut StageRng, sentence: &[usize], out: &mut Vec<usize>) {
        out.clear();
        match &self.keep_prob {
            None => out.extend_from_slice(sentence),
            Some(keep) => out.extend(sentence.iter().copied().filter(|&w| rng.random::<f64>() < keep[w])),
        }
    }

    fn effective_window(&self, rng: &mut StageRng) -> usize {
        if self.cfg.shrink_window {
            rng.random_range(1..=self.cfg.window)
        } else {
            self.cfg.window
        }
    }

    /// Runs every epoch over `shard`; returns per-epoch (loss sum, units).
    fn run_shard(&self, shard: &[Vec<usize>], seed: u64) -> Vec<(f64, u64)> {
        let dim = self.cfg.dim;
        let mut rng = rng(seed);
        let mut hidden = vec![0.0f32; dim];
        let mut grad = vec![0.0f32; dim];
        let mut sentence = Vec::new();
        let mut per_epoch = Vec::with_capacity(self.cfg.epochs);
        for _ in 0..self.cfg.epochs {
            let (mut loss_sum, mut units) = (0.0f64, 0u64);
            for raw in shard {
                self.subsampled(&mut rng, raw, &mut sentence);
                for t in 0..sentence.len() {
                    let window = self.effective_window(&mut rng);
                    let lo = t.saturating_sub(window);
                    let hi = (t + window).min(sentence.len() - 1);
                    match self.cfg.algorithm {
                        Algorithm::Sgns => {
                            let center = sentence[t];
                            for j in (lo..=hi).filter(|&j| j != t) {
                                let lr = self.lr();
                                self.input.read_row(center, &mut hidden);
                                grad.fill(0.0);
                                loss_sum += self.negatives_step(&mut rng, &hidden, sentence[j], lr, &mut grad);
                                for (d, g) in grad.iter().enumerate() {
                                    self.input.add(center, d, *g);
                                }
                                units += 1;
                                self.processed.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                        Algorithm::Cbow => {
                            let n_ctx = hi - lo;
                            if n_ctx == 0 {
                                continue;
                            }
                            let lr = self.lr();
                            hidden.fill(0.0);
                            for j in (lo..=hi).filter(|&j| j != t) {
                                for (d, h) in hidden.iter_mut().enumerate() {
                                    *h += self.input.get(sentence[j], d);
                                }
                            }
                            let inv = 1.0 / n_ctx as f32;
                            hidden.iter_mut().for_each(|h| *h *= inv);
                            grad.fill(0.0);
                            loss_sum += self.negatives_step(&mut rng, &hidden, sentence[t], lr, &mut grad);
                            for j in (lo..=hi).filter(|&j| j != t) {
                                for (d, g) in grad.iter().enumerate() {
                                    self.input.add(sentence[j], d, *g);
                                }
                            }
                            units += 1;
                            self.processed.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
            }
            per_epoch.push((loss_sum, units));
        }
        per_epoch
    }
}

fn encode(corpus: &SessionCorpus, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    let sentences: Vec<Vec<usize>> = corpus
        .sessions
        .iter()
        .map(|s| vocab.encode(&s.pages))
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::Empty(
            "no session has a page in the vocabulary".into(),
        ));
    }
    Ok(sentences)
}

fn keep_probabilities(vocab: &Vocabulary, threshold: f64) -> Vec<f64> {
    let total: u64 = vocab.counts().iter().sum();
    vocab
        .counts()
        .iter()
        .map(|&c| {
            let f = c as f64 / total as f64;
            (((f / threshold).sqrt() + 1.0) * threshold / f).min(1.0)
        })
        .collect()
}

/// Trains with the algorithm named in `cfg`, returning the vectors and progress statistics.
pub fn train_with_stats(
    corpus: &SessionCorpus,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sentences = encode(corpus, vocab)?;
    let dim = cfg.dim;
    let n = vocab.len();

    let mut init_rng = rng(cfg.seed);
    let half = 0.5 / dim as f32;
    let input = SharedMatrix::from_values(
        (0..n * dim).map(|_| init_rng.random_range(-half..=half)),
        dim,
    );
    let output = SharedMatrix::from_values(std::iter::repeat_n(0.0, n * dim), dim);
    let sampler = WeightedAliasIndex::new(vocab.sampling_weights().to_vec())
        .map_err(|e| Error::Numeric(format!("negative sampler: {e}")))?;

    let trainer = Trainer {
        cfg,
        input,
        output,
        sampler,
        keep_prob: cfg.subsample.map(|t| keep_probabilities(vocab, t)),
        processed: AtomicU64::new(0),
        total_units: units_per_epoch(&sentences, cfg.window, cfg.algorithm) * cfg.epochs as u64,
    };

    let workers = cfg.threads.min(sentences.len()).max(1);
    let shard_len = sentences.len().div_ceil(workers);
    let shards: Vec<&[Vec<usize>]> = sentences.chunks(shard_len).collect();
    let results: Vec<Vec<(f64, u64)>> = if shards.len() == 1 {
        vec![trainer.run_shard(shards[0], sub_seed(cfg.seed, 0))]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = shards
                .iter()
                .enumerate()
                .map(|(w, shard)| {
                    let trainer = &trainer;
                    scope.spawn(move || trainer.run_shard(shard, sub_seed(cfg.seed, w as u64)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        })
    };

    let mut epoch_mean_loss = Vec::with_capacity(cfg.epochs);
    let mut units_processed = 0;
    for epoch in 0..cfg.epochs {
        let (loss, units) = results
            .iter()
            .map(|r| r[epoch])
            .fold((0.0, 0u64), |acc, x| (acc.0 + x.0, acc.1 + x.1));
        units_processed += units;
        epoch_mean_loss.push(if units > 0 { loss / units as f64 } else { 0.0 });
    }
    log::info!(
        "trained {:?} dim={} epochs={} units={} final mean loss={:.5}",
        cfg.algorithm,
        dim,
        cfg.epochs,
        units_processed,
        epoch_mean_loss.last().copied().unwrap_or(0.0)
    );

    let Trainer { input, output, .. } = trainer;
    let embeddings = EmbeddingMatrix::new(dim, input.into_values(), output.into_values())
        .map_err(|_| Error::Numeric("training diverged to non-finite values".into()))?;
    Ok(TrainOutcome {
        embeddings,
        stats: TrainStats {
            units_processed,
            epoch_mean_loss,
        },
    })
}

/// Trains with the algorithm named in `cfg`.
pub fn train(corpus: &SessionCorpus, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    train_with_stats(corpus, vocab, cfg).map(|o| o.embeddings)
}

pub fn train_sgns(corpus: &SessionCorpus, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    train(corpus, vocab, &TrainConfig { algorithm: Algorithm::Sgns, ..cfg.clone() })
}

pub fn train_cbow(corpus: &SessionCorpus, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    train(corpus, vocab, &TrainConfig { algorithm: Algorithm::Cbow, ..cfg.clone() })
}
