//! Contextual page vectors learned from session sequences.

mod format;
mod sgns;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{
    read_binary, read_text, write_binary, write_text, EmbeddingFile, BINARY_MAGIC, BINARY_VERSION,
};
pub use sgns::{log_sigmoid, sgns_pair_gradients, sgns_pair_loss, sigmoid, PairGradients};
pub use train::{train, train_cbow, train_sgns, train_with_stats, TrainOutcome, TrainStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Sgns,
    Cbow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub threads: usize,
    /// Draw the effective window uniformly from `1..=window` per position.
    pub shrink_window: bool,
    /// Frequent-page subsampling threshold; `None` disables it.
    pub subsample: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr_start: 0.025,
            lr_end: 1e-4,
            algorithm: Algorithm::Sgns,
            seed: 1,
            threads: 1,
            shrink_window: false,
            subsample: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dim < 2 {
            return fail(format!("dim must be >= 2, got {}", self.dim));
        }
        if self.window == 0 || self.negatives == 0 || self.epochs == 0 || self.threads == 0 {
            return fail("window, negatives, epochs and threads must all be >= 1".into());
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return fail(format!(
                "learning rates must satisfy lr_start >= lr_end > 0, got {} -> {}",
                self.lr_start, self.lr_end
            ));
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("subsample threshold must be > 0, got {t}"));
            }
        }
        Ok(())
    }
}

/// Page vectors. `input` holds the published vector of every page; `output`
/// holds the context-side parameters and is empty when loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    input: Vec<f32>,
    output: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, input: Vec<f32>, output: Vec<f32>) -> Result<Self> {
        if dim == 0 || input.len() % dim != 0 {
            return Err(Error::format(
                "embedding matrix",
                format!("{} values do not form rows of width {dim}", input.len()),
            ));
        }
        if !output.is_empty() && output.len() != input.len() {
            return Err(Error::format("embedding matrix", "output shape differs from input"));
        }
        if input.iter().chain(&output).any(|x| !x.is_finite()) {
            return Err(Error::format("embedding matrix", "non-finite entry"));
        }
        Ok(EmbeddingMatrix { dim, input, output })
    }

    /// Builds a matrix from published vectors only.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::format("embedding matrix", "ragged rows"));
        }
        Self::new(dim, rows.concat(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_pages(&self) -> usize {
        self.input.len() / self.dim
    }

    pub fn vector(&self, id: usize) -> &[f32] {
        &self.input[id * self.dim..(id + 1) * self.dim]
    }

    pub fn vector_f64(&self, id: usize) -> Vec<f64> {
        self.vector(id).iter().map(|&x| f64::from(x)).collect()
    }

    /// All published vectors widened to `f64`, one row per page.
    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.n_pages()).map(|i| self.vector_f64(i)).collect()
    }

    pub fn input(&self) -> &[f32] {
        &self.input
    }

    pub fn output(&self) -> &[f32] {
        &self.output
    }

    pub fn has_output(&self) -> bool {
        !self.output.is_empty()
    }

    /// Little-endian bytes of the published vectors, for bitwise comparisons.
    pub fn input_bytes(&self) -> Vec<u8> {
        self.input.iter().flat_map(|x| x.to_le_bytes()).collect()
    }
}

/// Cosine similarity. Zero-norm inputs have no defined similarity.
pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a.into(), b.into());
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Top-`k` pages by cosine to `page_id`, excluding the page itself.
/// Ties are ordered by ascending page id; zero-norm candidates are skipped.
pub fn nearest_neighbors(
    page_id: usize,
    k: usize,
    embeddings: &EmbeddingMatrix,
) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if page_id >= embeddings.n_pages() {
        return Err(Error::UnknownPage(format!("#{page_id}")));
    }
    let query = embeddings.vector(page_id);
    let mut scored = Vec::with_capacity(embeddings.n_pages());
    for other in (0..embeddings.n_pages()).filter(|&i| i != page_id) {
        match cosine(query, embeddings.vector(other)) {
            Ok(sim) => scored.push((other, sim)),
            Err(Error::ZeroNorm) if embeddings.vector(other).iter().all(|&x| x == 0.0) => {}
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    fn matrix(rows: &[[f32; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn nearest_neighbor_excludes_query() {
        // cos(a,b) = 0.9, cos(a,c) = 0.1
        let b = [0.9f32, (1.0f32 - 0.81).sqrt()];
        let c = [0.1f32, (1.0f32 - 0.01).sqrt()];
        let m = matrix(&[[1.0, 0.0], b, c]);
        let nn = nearest_neighbors(0, 1, &m).unwrap();
        assert_eq!(nn.len(), 1);
        assert_eq!(nn[0].0, 1);
        assert!((nn[0].1 - 0.9).abs() < 1e-6);
        let all = nearest_neighbors(0, 10, &m).unwrap();
        assert_eq!(all.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn nearest_neighbor_ties_by_id() {
        let m = matrix(&[[1.0, 0.0], [0.0, 1.0], [0.0, 2.0], [0.0, 3.0], [1.0, 0.0]]);
        let nn = nearest_neighbors(1, 3, &m).unwrap();
        assert_eq!(nn.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 3, 0]);
        assert_eq!(nn, nearest_neighbors(1, 3, &m).unwrap());
        assert!(nearest_neighbors(9, 1, &m).is_err());
        assert!(nearest_neighbors(0, 0, &m).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig { dim: 1, ..Default::default() },
            TrainConfig { window: 0, ..Default::default() },
            TrainConfig { lr_start: 1e-5, ..Default::default() },
            TrainConfig { lr_end: 0.0, ..Default::default() },
            TrainConfig { threads: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
