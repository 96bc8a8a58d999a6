use rand::Rng;

use crate::rng::StageRng;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, each next one drawn with
/// probability proportional to squared distance from the nearest chosen center.
pub(crate) fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut StageRng) -> Vec<Vec<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..data.len())].clone());
    let mut nearest: Vec<f64> = data.iter().map(|x| squared_distance(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = data.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..data.len())
        };
        let center = data[pick].clone();
        for (n, x) in nearest.iter_mut().zip(data) {
            *n = n.min(squared_distance(x, &center));
        }
        centers.push(center);
    }
    centers
}

/// Index of the closest center; ties go to the lowest index.
pub(crate) fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}
