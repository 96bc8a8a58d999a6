use std::collections::BTreeMap;

use super::stats::spearman;
use crate::embedding::cosine;
use crate::error::{Error, Result};

/// A session vector with its owner and start time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedVector {
    pub user_id: String,
    pub start_time: u64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    /// `n_buckets + 1` ascending edges in seconds; bucket `i` is `[edges[i], edges[i+1])`.
    pub bucket_edges: Vec<f64>,
    pub mean_similarity: Vec<Option<f64>>,
    pub n_pairs: Vec<usize>,
}

impl DecayCurve {
    pub fn n_buckets(&self) -> usize {
        self.n_pairs.len()
    }

    pub fn populated(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.n_buckets()).filter_map(|i| {
            self.mean_similarity[i].map(|m| (self.bucket_edges[i], self.bucket_edges[i + 1], m))
        })
    }

    /// Spearman correlation between bucket midpoint and mean similarity over populated buckets.
    pub fn spearman(&self) -> Result<f64> {
        let (mid, mean): (Vec<f64>, Vec<f64>) =
            self.populated().map(|(lo, hi, m)| ((lo + hi) / 2.0, m)).unzip();
        spearman(&mid, &mean)
    }
}

/// Cosine similarity between each user's consecutive sessions, averaged per
/// time-gap bucket. Pairs further apart than `max_gap` are ignored.
pub fn similarity_decay(points: &[TimedVector], bucket_width: f64, max_gap: f64) -> Result<DecayCurve> {
    if !(bucket_width > 0.0 && bucket_width.is_finite()) {
        return Err(Error::Config(format!("bucket width must be > 0, got {bucket_width}")));
    }
    if !(max_gap >= bucket_width && max_gap.is_finite()) {
        return Err(Error::Config(format!(
            "max_gap ({max_gap}) must be at least one bucket wide ({bucket_width})"
        )));
    }
    let n_buckets = (max_gap / bucket_width).ceil() as usize;
    let bucket_edges: Vec<f64> = (0..=n_buckets).map(|i| i as f64 * bucket_width).collect();

    let mut by_user: BTreeMap<&str, Vec<&TimedVector>> = BTreeMap::new();
    for p in points {
        by_user.entry(&p.user_id).or_default().push(p);
    }
    let mut sums = vec![0.0f64; n_buckets];
    let mut n_pairs = vec![0usize; n_buckets];
    for sessions in by_user.values_mut() {
        sessions.sort_by_key(|p| p.start_time);
        for pair in sessions.windows(2) {
            let gap = (pair[1].start_time - pair[0].start_time) as f64;
            if gap > max_gap {
                continue;
            }
            let sim = match cosine(&pair[0].vector, &pair[1].vector) {
                Ok(s) => s,
                Err(Error::ZeroNorm) => continue,
                Err(e) => return Err(e),
            };
            let bucket = ((gap / bucket_width) as usize).min(n_buckets - 1);
            sums[bucket] += sim;
            n_pairs[bucket] += 1;
        }
    }
    let mean_similarity = sums
        .iter()
        .zip(&n_pairs)
        .map(|(s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    Ok(DecayCurve {
        bucket_edges,
        mean_similarity,
        n_pairs,
    })
}
