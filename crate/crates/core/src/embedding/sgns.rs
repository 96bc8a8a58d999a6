//! Skip-gram negative-sampling objective for one (center, context) pair.

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`, accurate for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    -(x.max(0.0) - x + (-x.abs()).exp().ln_1p())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<()> {
    let dim = center.len();
    for v in std::iter::once(context).chain(negatives.iter().copied()) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    Ok(())
}

/// `−ln σ(center·context) − Σ_k ln σ(−center·neg_k)`.
pub fn sgns_pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<f64> {
    check_dims(center, context, negatives)?;
    let positive = -log_sigmoid(dot(center, context));
    let negative: f64 = negatives
        .iter()
        .map(|n| -log_sigmoid(-dot(center, n)))
        .sum();
    Ok(positive + negative)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradients of [`sgns_pair_loss`]:
/// `∂/∂center = (σ(c·o) − 1)·o + Σ σ(c·n_k)·n_k`, `∂/∂o = (σ(c·o) − 1)·c`,
/// `∂/∂n_k = σ(c·n_k)·c`.
pub fn sgns_pair_gradients(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
) -> Result<PairGradients> {
    check_dims(center, context, negatives)?;
    let pos_coef = sigmoid(dot(center, context)) - 1.0;
    let mut grad_center: Vec<f64> = context.iter().map(|o| pos_coef * o).collect();
    let grad_context = center.iter().map(|c| pos_coef * c).collect();
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for n in negatives {
        let coef = sigmoid(dot(center, n));
        for (g, x) in grad_center.iter_mut().zip(n.iter()) {
            *g += coef * x;
        }
        grad_negatives.push(center.iter().map(|c| coef * c).collect());
    }
    Ok(PairGradients {
        center: grad_center,
        context: grad_context,
        negatives: grad_negatives,
    })
}
