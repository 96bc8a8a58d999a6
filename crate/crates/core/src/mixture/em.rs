//! Expectation-maximization with k-means++ restarts.

use rand::Rng;
use rayon::prelude::*;

use super::kmeans::{kmeans_pp, nearest_center};
use super::{bic, normalize_log, FitConfig, FitStats, IntentModel};
use crate::error::{Error, Result};
use crate::rng::{rng, sub_seed, StageRng};

/// Weight below which a component is considered collapsed and re-seeded.
const COLLAPSED_WEIGHT: f64 = 1e-8;

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

fn validate_data(vectors: &[Vec<f64>], k: usize) -> Result<usize> {
    if vectors.len() <= k {
        return Err(Error::Config(format!(
            "need more points than components: N={} k={k}",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err(Error::format("fit input", "zero-dimensional vectors"));
    }
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite input vector".into()));
        }
    }
    Ok(dim)
}

fn data_variance(vectors: &[Vec<f64>], floor: f64) -> Vec<f64> {
    let n = vectors.len() as f64;
    let dim = vectors[0].len();
    (0..dim)
        .map(|d| {
            let mean = vectors.iter().map(|v| v[d]).sum::<f64>() / n;
            let var = vectors.iter().map(|v| (v[d] - mean).powi(2)).sum::<f64>() / n;
            var.max(floor)
        })
        .collect()
}

/// Weighted M-step. `resp` is N×k, row-major. Sums run over points in index
/// order so results do not depend on thread count.
fn m_step(
    vectors: &[Vec<f64>],
    resp: &[f64],
    k: usize,
    cfg: &FitConfig,
    rng: &mut StageRng,
    resets: &mut usize,
) -> Params {
    let n = vectors.len();
    let dim = vectors[0].len();
    let mut mass = vec![0.0; k];
    let mut means = vec![vec![0.0; dim]; k];
    for (x, r) in vectors.iter().zip(resp.chunks_exact(k)) {
        for j in 0..k {
            mass[j] += r[j];
            for d in 0..dim {
                means[j][d] += r[j] * x[d];
            }
        }
    }
    for j in 0..k {
        if mass[j] > 0.0 {
            means[j].iter_mut().for_each(|m| *m /= mass[j]);
        }
    }
    let mut variances = vec![vec![0.0; dim]; k];
    for (x, r) in vectors.iter().zip(resp.chunks_exact(k)) {
        for j in 0..k {
            for d in 0..dim {
                let diff = x[d] - means[j][d];
                variances[j][d] += r[j] * diff * diff;
            }
        }
    }
    let mut weights: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
    let mut fallback = None;
    for j in 0..k {
        if weights[j] < COLLAPSED_WEIGHT {
            *resets += 1;
            let spread = fallback.get_or_insert_with(|| data_variance(vectors, cfg.variance_floor));
            means[j] = vectors[rng.random_range(0..n)].clone();
            variances[j] = spread.clone();
            weights[j] = 1.0 / n as f64;
            continue;
        }
        variances[j]
            .iter_mut()
            .for_each(|v| *v = (*v / mass[j]).max(cfg.variance_floor));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Params {
        weights,
        means,
        variances,
    }
}

fn build(params: Params, cfg: &FitConfig, stats: FitStats) -> Result<IntentModel> {
    IntentModel::new(
        params.weights,
        params.means,
        params.variances,
        cfg.variance_floor,
        stats,
    )
    .map_err(|e| Error::Numeric(format!("EM produced an invalid model: {e}")))
}

/// E-step: fills `resp` with posteriors and returns the data log-likelihood.
fn e_step(model: &IntentModel, vectors: &[Vec<f64>], resp: &mut [f64]) -> f64 {
    let k = model.k();
    let row_ll: Vec<f64> = resp
        .par_chunks_mut(k)
        .zip(vectors.par_iter())
        .map(|(row, x)| {
            model.joint_log_densities(x, row);
            normalize_log(row)
        })
        .collect();
    row_ll.iter().sum()
}

fn run_em(vectors: &[Vec<f64>], cfg: &FitConfig, seed: u64) -> Result<IntentModel> {
    let k = cfg.k;
    let n = vectors.len();
    let mut rng = rng(seed);
    let centers = kmeans_pp(vectors, k, &mut rng);
    let mut resp = vec![0.0; n * k];
    for (x, row) in vectors.iter().zip(resp.chunks_exact_mut(k)) {
        row[nearest_center(x, &centers)] = 1.0;
    }
    let mut stats = FitStats::default();
    let mut params = m_step(vectors, &resp, k, cfg, &mut rng, &mut stats.resets);

    loop {
        let model = build(params, cfg, FitStats::default())?;
        let ll = e_step(&model, vectors, &mut resp);
        if !ll.is_finite() {
            return Err(Error::Numeric(format!("log-likelihood became {ll}")));
        }
        if let Some(&prev) = stats.trace.last() {
            let improvement = (ll - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if improvement < cfg.tol {
                stats.converged = true;
            }
        }
        stats.trace.push(ll);
        stats.log_likelihood = ll;
        if stats.converged || stats.iterations >= cfg.max_iter {
            return build(
                Params {
                    weights: model.weights().to_vec(),
                    means: model.means().to_vec(),
                    variances: model.variances().to_vec(),
                },
                cfg,
                stats,
            );
        }
        params = m_step(vectors, &resp, k, cfg, &mut rng, &mut stats.resets);
        stats.iterations += 1;
    }
}

/// Fits a `cfg.k`-component mixture, keeping the best of `cfg.n_init` restarts
/// by final log-likelihood (earlier restart wins ties).
pub fn fit(vectors: &[Vec<f64>], cfg: &FitConfig) -> Result<IntentModel> {
    cfg.validate()?;
    validate_data(vectors, cfg.k)?;
    let mut best: Option<IntentModel> = None;
    for restart in 0..cfg.n_init {
        let model = run_em(vectors, cfg, sub_seed(cfg.seed, restart as u64))?;
        log::debug!(
            "k={} restart {restart}: logL={:.6} after {} iterations",
            cfg.k,
            model.fit_stats().log_likelihood,
            model.fit_stats().iterations
        );
        if best
            .as_ref()
            .is_none_or(|b| model.fit_stats().log_likelihood > b.fit_stats().log_likelihood)
        {
            best = Some(model);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Fits every `k` in `k_range` and returns the lowest-BIC model (smaller `k`
/// on ties) together with `(k, BIC)` in input order.
pub fn select_k(
    vectors: &[Vec<f64>],
    k_range: &[usize],
    cfg: &FitConfig,
) -> Result<(IntentModel, Vec<(usize, f64)>)> {
    if k_range.is_empty() {
        return Err(Error::Config("k_range must not be empty".into()));
    }
    let mut scores = Vec::with_capacity(k_range.len());
    let mut best: Option<(IntentModel, f64)> = None;
    for &k in k_range {
        let model = fit(vectors, &FitConfig { k, ..cfg.clone() })?;
        let score = bic(&model, vectors)?;
        log::info!("k={k}: BIC={score:.3}");
        scores.push((k, score));
        let better = match &best {
            None => true,
            Some((m, b)) => score < *b || (score == *b && k < m.k()),
        };
        if better {
            best = Some((model, score));
        }
    }
    Ok((best.expect("non-empty range").0, scores))
}
