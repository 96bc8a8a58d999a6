use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient under Euclidean distance.
///
/// Requires at least two clusters with at least two members each.
pub fn cluster_separation(vectors: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if vectors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: labels.len(),
        });
    }
    let mut members: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *members.entry(l).or_default() += 1;
    }
    if members.len() < 2 {
        return Err(Error::DegenerateLabels(format!("{} distinct label(s)", members.len())));
    }
    if let Some((l, _)) = members.iter().find(|(_, &n)| n < 2) {
        return Err(Error::DegenerateLabels(format!("cluster {l} has a single member")));
    }
    let cluster_ids: Vec<usize> = members.keys().copied().collect();
    let slot: BTreeMap<usize, usize> = cluster_ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let sizes: Vec<f64> = members.values().map(|&n| n as f64).collect();

    let scores: Vec<f64> = (0..vectors.len())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; sizes.len()];
            for (j, v) in vectors.iter().enumerate() {
                if i != j {
                    sums[slot[&labels[j]]] += euclidean(&vectors[i], v);
                }
            }
            let own = slot[&labels[i]];
            let a = sums[own] / (sizes[own] - 1.0);
            let b = (0..sizes.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c])
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Coordinates on the top two principal axes of the centered data. Each axis is
/// oriented so its largest-magnitude loading is positive.
pub fn project_2d(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Empty(format!("projection needs >= 2 vectors, got {n}")));
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::format("projection input", "ragged or empty vectors"));
    }
    let mean: Vec<f64> = (0..dim)
        .map(|d| vectors.iter().map(|v| v[d]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, dim, |i, d| vectors[i][d] - mean[d]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(2);
    for &col in order.iter().take(2) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let mut lead = 0;
        for (i, x) in axis.iter().enumerate() {
            if x.abs() > axis[lead].abs() {
                lead = i;
            }
        }
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(axis);
    }
    Ok((0..n)
        .map(|i| {
            let row = centered.row(i);
            let coord = |a: Option<&Vec<f64>>| a.map_or(0.0, |a| row.iter().zip(a).map(|(x, y)| x * y).sum());
            [coord(axes.first()), coord(axes.get(1))]
        })
        .collect())
}

/// Fraction of items whose predicted label maps to their true label under the
/// best one-to-one matching of label sets (exact, via bitmask dynamic programming).
pub fn matched_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("no labels to match".into()));
    }
    let dense = |labels: &[usize]| {
        let ids: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
        let ids: BTreeMap<usize, usize> = ids.keys().enumerate().map(|(i, &l)| (l, i)).collect();
        let mapped: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
        (mapped, ids.len())
    };
    let (p, kp) = dense(predicted);
    let (t, kt) = dense(truth);
    // rows = larger side, columns (bitmask) = smaller side
    let (rows, cols, swap) = if kp >= kt { (kp, kt, false) } else { (kt, kp, true) };
    if cols > 20 {
        return Err(Error::Config(format!("matching over {cols} labels is too large")));
    }
    let mut table = vec![vec![0u64; cols]; rows];
    for (&a, &b) in p.iter().zip(&t) {
        let (r, c) = if swap { (b, a) } else { (a, b) };
        table[r][c] += 1;
    }
    let mut best = vec![u64::MIN; 1 << cols];
    let mut reachable = vec![false; 1 << cols];
    best[0] = 0;
    reachable[0] = true;
    for row in &table {
        let mut next_best = best.clone();
        let mut next_reach = reachable.clone();
        for mask in 0..(1usize << cols) {
            if !reachable[mask] {
                continue;
            }
            for (c, &w) in row.iter().enumerate() {
                if mask & (1 << c) == 0 {
                    let m = mask | (1 << c);
                    let v = best[mask] + w;
                    if !next_reach[m] || v > next_best[m] {
                        next_best[m] = v;
                        next_reach[m] = true;
                    }
                }
            }
        }
        best = next_best;
        reachable = next_reach;
    }
    let matched = best.iter().zip(&reachable).filter(|(_, &r)| r).map(|(b, _)| *b).max().unwrap_or(0);
    Ok(matched as f64 / predicted.len() as f64)
}
