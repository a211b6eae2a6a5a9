//! Planar k-means with k-means++ seeding and the elbow rule.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Lloyd iterations per fit.
pub const LLOYD_ITERS: usize = 50;

/// Largest number of clusters tried by the elbow search.
pub const K_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Point>,
    pub labels: Vec<usize>,
    /// Cluster proportions.
    pub weights: Vec<f64>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
}

fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest(p: &Point, centers: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &[Point], k: usize, rng: &mut R) -> Vec<Point> {
    let m = points.len();
    let mut centers = vec![points[rng.random_range(0..m)]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        centers.push(points[idx]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &points[idx]));
        }
    }
    centers
}

/// k-means on planar points. An empty cluster is re-seeded at the point
/// farthest from its current center.
pub fn kmeans<R: Rng + ?Sized>(points: &[Point], k: usize, rng: &mut R) -> Result<KMeans> {
    let m = points.len();
    if k == 0 || k > m {
        return Err(Error::Invalid(alloc::format!("cannot form {k} clusters from {m} points")));
    }
    let mut centers = seed_plus_plus(points, k, rng);
    let mut labels = vec![0; m];
    let mut history = Vec::with_capacity(LLOYD_ITERS);
    for _ in 0..LLOYD_ITERS {
        let mut changed = false;
        let mut dists = vec![0.0; m];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centers);
            if c != labels[i] {
                changed = true;
            }
            labels[i] = c;
            dists[i] = d;
        }
        history.push(dists.iter().sum());
        let mut sums = vec![[0.0, 0.0]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            } else {
                let far =
                    (0..m).max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a))).expect("non-empty point set");
                centers[c] = points[far];
                dists[far] = 0.0;
                changed = true;
            }
        }
        if !changed && history.len() > 1 {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        labels[i] = nearest(p, &centers).0;
    }
    let inertia = points.iter().zip(&labels).map(|(p, &c)| dist2(p, &centers[c])).sum();
    history.push(inertia);
    let mut weights = vec![0.0; k];
    for &c in &labels {
        weights[c] += 1.0 / m as f64;
    }
    Ok(KMeans { centers, labels, weights, inertia, history })
}

/// Elbow rule on inertias for `k = 1..=k_max`.
///
/// Picks the interior `k` with the largest second difference; when there is
/// no positive bend, or it does not beat the one-cluster inertia by more
/// than 10%, falls back to the smallest `k >= 2` that does, and otherwise 1.
pub fn elbow_select(inertias: &[f64]) -> usize {
    let k_max = inertias.len();
    if k_max < 3 {
        return k_max;
    }
    let at = |k: usize| inertias[k - 1];
    let improves = |k: usize| at(k) < 0.9 * at(1);
    let mut best = 2;
    let mut best_bend = f64::NEG_INFINITY;
    for k in 2..k_max {
        let bend = (at(k - 1) - at(k)) - (at(k) - at(k + 1));
        if bend > best_bend {
            best_bend = bend;
            best = k;
        }
    }
    if best_bend > 0.0 && improves(best) {
        return best;
    }
    (2..k_max).find(|&k| improves(k)).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn elbow_examples() {
        assert_eq!(elbow_select(&[100.0, 10.0, 9.0, 8.0]), 2);
        assert_eq!(elbow_select(&[40.0, 30.0, 20.0, 10.0]), 2);
        assert_eq!(elbow_select(&[5.0, 5.0, 5.0, 5.0]), 1);
        assert_eq!(elbow_select(&[5.0, 4.0]), 2);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let fit = kmeans(&pts, 1, &mut rng).unwrap();
        assert!((fit.centers[0][0] - 1.0).abs() < 1e-15);
        assert!((fit.centers[0][1] - 1.0).abs() < 1e-15);
        assert!(kmeans(&pts, 4, &mut rng).is_err());
    }
}
