//! Diagonal-covariance Gaussian mixture over page vectors.
//!
//! Each component is an intent; the posterior over components of a vector is
//! its intent distribution.

mod em;
mod format;
mod kmeans;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use em::{fit, select_k};
pub use format::{read_model_json, write_model_json, MODEL_FORMAT_VERSION};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub tol: f64,
    pub n_init: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: 5,
            max_iter: 200,
            tol: 1e-6,
            n_init: 5,
            variance_floor: 1e-6,
            seed: 1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_init == 0 || self.max_iter == 0 {
            return Err(Error::Config("k, n_init and max_iter must be >= 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Config(format!(
                "variance_floor must be > 0, got {}",
                self.variance_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitStats {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Components re-seeded after their weight collapsed.
    pub resets: usize,
    /// Log-likelihood after every E-step of the winning restart.
    pub trace: Vec<f64>,
}

/// Fitted mixture. Parameters are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    variance_floor: f64,
    fit_stats: FitStats,
    /// ln w_j − ½ Σ_d ln(2π σ²_jd), cached per component.
    log_norms: Vec<f64>,
}

impl IntentModel {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        variance_floor: f64,
        fit_stats: FitStats,
    ) -> Result<Self> {
        let k = weights.len();
        let bad = |d: String| Err(Error::format("intent model", d));
        if k == 0 {
            return bad("no components".into());
        }
        if means.len() != k || variances.len() != k {
            return bad("weights, means and covariances disagree on k".into());
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|r| r.len() != dim) {
            return bad("ragged means or covariances".into());
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be finite and non-negative".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {total}"));
        }
        if !(variance_floor > 0.0 && variance_floor.is_finite()) {
            return bad("variance floor must be positive".into());
        }
        if means.iter().flatten().any(|x| !x.is_finite()) {
            return bad("non-finite mean".into());
        }
        if variances
            .iter()
            .flatten()
            .any(|v| !(v.is_finite() && *v >= variance_floor))
        {
            return bad("covariance entry below the variance floor".into());
        }
        let log_norms = weights
            .iter()
            .zip(&variances)
            .map(|(w, var)| w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect();
        Ok(IntentModel {
            weights,
            means,
            variances,
            variance_floor,
            fit_stats,
            log_norms,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Diagonal covariance of every component.
    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    pub fn variance_floor(&self) -> f64 {
        self.variance_floor
    }

    pub fn fit_stats(&self) -> &FitStats {
        &self.fit_stats
    }

    /// Number of free parameters: weights, means and diagonal variances.
    pub fn n_parameters(&self) -> usize {
        let (k, d) = (self.k(), self.dim());
        k - 1 + 2 * k * d
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// `ln(w_j · N(v; μ_j, Σ_j))` for every component, written into `out`.
    pub(crate) fn joint_log_densities(&self, v: &[f64], out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            let mahalanobis: f64 = v
                .iter()
                .zip(&self.means[j])
                .zip(&self.variances[j])
                .map(|((x, m), var)| (x - m) * (x - m) / var)
                .sum();
            *slot = self.log_norms[j] - 0.5 * mahalanobis;
        }
    }
}

/// Posterior over intents for one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentDistribution {
    pub probs: Vec<f64>,
}

impl IntentDistribution {
    /// Most probable intent; exact ties go to the smallest id.
    pub fn label(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights in place into probabilities; returns their log-sum-exp.
pub(crate) fn normalize_log(values: &mut [f64]) -> f64 {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

pub fn responsibilities(model: &IntentModel, v: &[f64]) -> Result<IntentDistribution> {
    model.check_dim(v)?;
    let mut probs = vec![0.0; model.k()];
    model.joint_log_densities(v, &mut probs);
    let lse = normalize_log(&mut probs);
    if !lse.is_finite() {
        return Err(Error::Numeric("vector has zero density under every component".into()));
    }
    Ok(IntentDistribution { probs })
}

pub fn label(model: &IntentModel, v: &[f64]) -> Result<usize> {
    model.check_dim(v)?;
    let mut logp = vec![0.0; model.k()];
    model.joint_log_densities(v, &mut logp);
    Ok(argmax(&logp))
}

/// `Σ_n ln Σ_j w_j N(v_n; μ_j, Σ_j)`.
pub fn log_likelihood(model: &IntentModel, vectors: &[Vec<f64>]) -> Result<f64> {
    let mut buf = vec![0.0; model.k()];
    let mut total = 0.0;
    for v in vectors {
        model.check_dim(v)?;
        model.joint_log_densities(v, &mut buf);
        total += log_sum_exp(&buf);
    }
    Ok(total)
}

/// Bayesian information criterion `−2·lnL + p·ln N`.
pub fn bic(model: &IntentModel, vectors: &[Vec<f64>]) -> Result<f64> {
    let ll = log_likelihood(model, vectors)?;
    Ok(-2.0 * ll + model.n_parameters() as f64 * (vectors.len() as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn model_1d(weights: &[f64], means: &[f64], variances: &[f64]) -> IntentModel {
        IntentModel::new(
            weights.to_vec(),
            means.iter().map(|m| vec![*m]).collect(),
            variances.iter().map(|v| vec![*v]).collect(),
            1e-6,
            FitStats::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_component_is_certain() {
        let m = model_1d(&[1.0], &[3.0], &[2.0]);
        for x in [-100.0, 0.0, 3.0, 1e5] {
            assert_eq!(responsibilities(&m, &[x]).unwrap().probs, vec![1.0]);
            assert_eq!(label(&m, &[x]).unwrap(), 0);
        }
    }

    #[test]
    fn symmetric_midpoint() {
        let m = model_1d(&[0.5, 0.5], &[0.0, 4.0], &[1.0, 1.0]);
        let r = responsibilities(&m, &[2.0]).unwrap();
        assert!((r.probs[0] - 0.5).abs() < 1e-15);
        assert_eq!(r.label(), 0);
    }

    #[test]
    fn density_ratio_at_one() {
        let m = model_1d(&[0.5, 0.5], &[0.0, 4.0], &[1.0, 1.0]);
        let r = responsibilities(&m, &[1.0]).unwrap();
        // exp(−0.5) / exp(−4.5) = e⁴
        let e4 = 4.0f64.exp();
        assert!((r.probs[0] - e4 / (1.0 + e4)).abs() < 1e-12);
        assert!((r.probs[1] - 1.0 / (1.0 + e4)).abs() < 1e-12);
        assert!((r.probs[0] - 0.98201).abs() < 1e-5);
    }

    #[test]
    fn log_likelihood_at_mode() {
        let m = IntentModel::new(
            vec![1.0],
            vec![vec![0.0, 0.0]],
            vec![vec![1.0, 1.0]],
            1e-6,
            FitStats::default(),
        )
        .unwrap();
        let ll = log_likelihood(&m, &[vec![0.0, 0.0]]).unwrap();
        assert!((ll + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        assert!((ll + 1.83788).abs() < 1e-5);
    }

    #[test]
    fn log_likelihood_matches_direct_density_sum() {
        let m = IntentModel::new(
            vec![0.3, 0.7],
            vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            vec![vec![1.0, 0.5], vec![2.0, 1.5]],
            1e-6,
            FitStats::default(),
        )
        .unwrap();
        let data = vec![vec![0.1, 0.2], vec![1.5, -0.5], vec![3.0, 2.0], vec![-1.0, 0.0]];
        let naive: f64 = data
            .iter()
            .map(|x| {
                (0..2)
                    .map(|j| {
                        let mut dens = m.weights()[j];
                        for d in 0..2 {
                            let var = m.variances()[j][d];
                            let diff = x[d] - m.means()[j][d];
                            dens *= (-0.5 * diff * diff / var).exp()
                                / (2.0 * std::f64::consts::PI * var).sqrt();
                        }
                        dens
                    })
                    .sum::<f64>()
                    .ln()
            })
            .sum();
        assert!((log_likelihood(&m, &data).unwrap() - naive).abs() < 1e-9);
        // additivity over points
        let split = log_likelihood(&m, &data[..2]).unwrap() + log_likelihood(&m, &data[2..]).unwrap();
        assert!((split - log_likelihood(&m, &data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn label_ties_and_argmax() {
        assert_eq!(IntentDistribution { probs: vec![0.1, 0.7, 0.2] }.label(), 1);
        assert_eq!(IntentDistribution { probs: vec![0.5, 0.5] }.label(), 0);
    }

    #[test]
    fn dimension_mismatch() {
        let m = model_1d(&[1.0], &[0.0], &[1.0]);
        assert!(responsibilities(&m, &[1.0, 2.0]).is_err());
        assert!(label(&m, &[]).is_err());
        assert!(log_likelihood(&m, &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn model_validation() {
        let ok = |w: Vec<f64>, var: f64| {
            IntentModel::new(w.clone(), vec![vec![0.0]; w.len()], vec![vec![var]; w.len()], 1e-6, FitStats::default())
        };
        assert!(ok(vec![0.5, 0.5], 1.0).is_ok());
        assert!(ok(vec![0.5, 0.6], 1.0).is_err());
        assert!(ok(vec![1.5, -0.5], 1.0).is_err());
        assert!(ok(vec![1.0], 1e-9).is_err());
    }

    #[test]
    fn underflowing_densities_stay_normalized() {
        // Raw densities underflow to zero in direct evaluation at this distance.
        let m = IntentModel::new(
            vec![0.5, 0.5],
            vec![vec![0.0; 4], vec![1e4; 4]],
            vec![vec![1e-4; 4], vec![1e-4; 4]],
            1e-6,
            FitStats::default(),
        )
        .unwrap();
        let r = responsibilities(&m, &[5e3 + 1.0; 4]).unwrap();
        assert!(r.probs.iter().all(|p| p.is_finite()));
        assert!((r.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(r.label(), 1);
    }

    fn arb_model(k: usize, dim: usize) -> impl Strategy<Value = IntentModel> {
        (
            prop::collection::vec(0.01f64..1.0, k),
            prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dim), k),
            prop::collection::vec(prop::collection::vec(1e-3f64..10.0, dim), k),
        )
            .prop_map(|(w, means, vars)| {
                let total: f64 = w.iter().sum();
                let w = w.iter().map(|x| x / total).collect();
                IntentModel::new(w, means, vars, 1e-6, FitStats::default()).unwrap()
            })
    }

    proptest! {
        #[test]
        fn responsibilities_are_normalized(
            model in arb_model(4, 3),
            v in prop::collection::vec(-1e3f64..1e3, 3),
        ) {
            let r = responsibilities(&model, &v).unwrap();
            prop_assert!((r.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(r.probs.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert_eq!(r.label(), label(&model, &v).unwrap());
        }

        #[test]
        fn responsibilities_ignore_common_log_shift(
            model in arb_model(3, 2),
            v in prop::collection::vec(-20.0f64..20.0, 2),
            shift in -700.0f64..700.0,
        ) {
            let mut logp = vec![0.0; 3];
            model.joint_log_densities(&v, &mut logp);
            let mut shifted: Vec<f64> = logp.iter().map(|x| x + shift).collect();
            normalize_log(&mut shifted);
            let r = responsibilities(&model, &v).unwrap();
            for (a, b) in shifted.iter().zip(&r.probs) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn label_is_invariant_to_monotone_transforms(
            model in arb_model(5, 2),
            v in prop::collection::vec(-60.0f64..60.0, 2),
            scale in 0.1f64..10.0,
            offset in -100.0f64..100.0,
        ) {
            let mut logp = vec![0.0; 5];
            model.joint_log_densities(&v, &mut logp);
            let transformed: Vec<f64> = logp.iter().map(|x| (scale * x + offset).tanh() + scale * x).collect();
            prop_assert_eq!(argmax(&transformed), label(&model, &v).unwrap());
        }
    }
}
