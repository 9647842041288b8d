use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{canonical_labels, unit_points, ClusterError};
use crate::model::{squared_euclidean, Embedding};

/// Lloyd's K-Means on unit-normalized points with k-means++ seeding.
///
/// Each restart draws its own k-means++ initialization from a ChaCha stream
/// derived from `seed`; the restart with the lowest inertia wins (earliest
/// restart on ties). A cluster that empties during an iteration receives the
/// point lying farthest from its current centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    k: usize,
    seed: u64,
    restarts: usize,
    max_iters: usize,
    tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Cluster label per input point, numbered by first appearance.
    pub labels: Vec<usize>,
    /// Arithmetic means of the (normalized) members, indexed by label.
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared Euclidean distances from points to their centroid.
    pub inertia: f64,
    /// Inertia after every update step of the winning restart.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    /// Final inertia of every restart, in restart order.
    pub restart_inertias: Vec<f64>,
}

impl KMeans {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            seed: 0,
            restarts: 10,
            max_iters: 300,
            tolerance: 1e-6,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters.max(1);
        self
    }

    pub fn tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn fit(&self, points: &[Embedding]) -> Result<KMeansFit, ClusterError> {
        let unit = unit_points(points)?;
        self.fit_unit(&unit)
    }

    pub(crate) fn fit_unit(&self, points: &[Vec<f64>]) -> Result<KMeansFit, ClusterError> {
        let n = points.len();
        if n == 0 {
            return Err(ClusterError::EmptyInput);
        }
        if self.k == 0 {
            return Err(ClusterError::ZeroClusters);
        }
        if self.k > n {
            return Err(ClusterError::TooManyClusters { k: self.k, n });
        }
        let mut master = ChaCha8Rng::seed_from_u64(self.seed);
        let seeds: Vec<u64> = (0..self.restarts).map(|_| master.random()).collect();
        let runs: Vec<Run> = seeds
            .par_iter()
            .map(|&s| self.single_run(points, &mut ChaCha8Rng::seed_from_u64(s)))
            .collect();
        let restart_inertias: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
        let best = runs
            .into_iter()
            .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
            .expect("at least one restart");

        // Relabel by first appearance and permute centroids to match.
        let labels = canonical_labels(&best.labels);
        let mut centroids = vec![Vec::new(); self.k];
        for (old, new) in best.labels.iter().zip(&labels) {
            if centroids[*new].is_empty() {
                centroids[*new] = best.centroids[*old].clone();
            }
        }
        Ok(KMeansFit {
            labels,
            centroids,
            inertia: best.inertia,
            inertia_history: best.history,
            iterations: best.iterations,
            restart_inertias,
        })
    }

    fn single_run(&self, points: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Run {
        let n = points.len();
        let k = self.k;
        let mut centers = plus_plus_init(points, k, rng);
        let mut labels = vec![usize::MAX; n];
        let mut history = Vec::new();
        let mut iterations = 0;
        for _ in 0..self.max_iters {
            iterations += 1;
            assign(points, &centers, &mut labels);
            repair_empty(points, &centers, &mut labels, k);
            let updated = means(points, &labels, k, &centers);
            let shift: f64 = centers.iter().zip(&updated).map(|(a, b)| squared_euclidean(a, b)).sum();
            centers = updated;
            history.push(inertia(points, &centers, &labels));
            if shift <= self.tolerance {
                break;
            }
        }
        Run {
            inertia: *history.last().expect("at least one iteration"),
            labels,
            centroids: centers,
            history,
            iterations,
        }
    }
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_euclidean(p, &points[first])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // Rounding can exhaust the mass early; fall back to the last weighted point.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive mass"))
        } else {
            chosen.iter().position(|&c| !c).expect("k <= n")
        };
        chosen[pick] = true;
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_euclidean(p, &points[pick]));
        }
        centers.push(points[pick].clone());
    }
    centers
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_euclidean(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize]) {
    labels
        .par_iter_mut()
        .zip(points.par_iter())
        .with_min_len(256)
        .for_each(|(label, p)| *label = nearest(p, centers).0);
}

fn repair_empty(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = squared_euclidean(p, &centers[labels[i]]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("k <= n guarantees a donor cluster");
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] = 1;
    }
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize, previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(j, (s, c))| {
            if c == 0 {
                previous[j].clone()
            } else {
                s.into_iter().map(|x| x / c as f64).collect()
            }
        })
        .collect()
}

fn inertia(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_euclidean(p, &centers[l]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::unit_vector;

    fn circle(degrees: &[f64]) -> Vec<Embedding> {
        degrees
            .iter()
            .map(|d| {
                let r = d.to_radians();
                Embedding::from_f64(&[r.cos(), r.sin()]).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = circle(&[0.0, 20.0, 40.0, 100.0]);
        let fit = KMeans::new(1).seed(3).fit(&pts).unwrap();
        assert!(fit.labels.iter().all(|&l| l == 0));
        let unit: Vec<Vec<f64>> = pts.iter().map(|p| p.unit_f64().unwrap()).collect();
        let mean: Vec<f64> = (0..2).map(|d| unit.iter().map(|p| p[d]).sum::<f64>() / 4.0).collect();
        let expected: f64 = unit.iter().map(|p| squared_euclidean(p, &mean)).sum();
        assert!((fit.inertia - expected).abs() < 1e-12);
        // The centroid direction is the normalized mean.
        let dir = unit_vector(&fit.centroids[0]).unwrap();
        let want = unit_vector(&mean).unwrap();
        assert!(squared_euclidean(&dir, &want) < 1e-20);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let pts = circle(&[0.0, 45.0, 90.0, 135.0]);
        let fit = KMeans::new(4).seed(1).fit(&pts).unwrap();
        assert_eq!(fit.labels, vec![0, 1, 2, 3]);
        assert!(fit.inertia < 1e-24);
    }

    #[test]
    fn identical_points_still_fill_every_cluster() {
        let pts = circle(&[10.0; 5]);
        let fit = KMeans::new(3).seed(9).fit(&pts).unwrap();
        let mut seen = fit.labels.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn errors() {
        let pts = circle(&[0.0, 10.0]);
        assert_eq!(
            KMeans::new(3).fit(&pts),
            Err(ClusterError::TooManyClusters { k: 3, n: 2 })
        );
        assert_eq!(KMeans::new(1).fit(&[]), Err(ClusterError::EmptyInput));
        assert_eq!(KMeans::new(0).fit(&pts), Err(ClusterError::ZeroClusters));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let pts = circle(&[0.0, 3.0, 7.0, 50.0, 55.0, 120.0, 124.0, 200.0]);
        let a = KMeans::new(3).seed(11).fit(&pts).unwrap();
        let b = KMeans::new(3).seed(11).fit(&pts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn best_restart_has_lowest_inertia() {
        let pts = circle(&[0.0, 3.0, 7.0, 50.0, 55.0, 120.0, 124.0, 200.0, 260.0, 300.0]);
        let fit = KMeans::new(4).seed(5).restarts(8).fit(&pts).unwrap();
        assert_eq!(fit.restart_inertias.len(), 8);
        assert!(fit.restart_inertias.iter().all(|&r| fit.inertia <= r));
    }

    #[test]
    fn planted_blobs_are_recovered() {
        // Blob means at 0 and 90 degrees with 2 degrees of spread; every point
        // is nearer its own blob mean than the other (checked below), so the
        // partition is the planted one.
        let mut degrees: Vec<f64> = (0..10).map(|i| -1.0 + 0.2 * i as f64).collect();
        degrees.extend((0..10).map(|i| 89.0 + 0.2 * i as f64));
        let pts = circle(&degrees);
        let unit: Vec<Vec<f64>> = pts.iter().map(|p| p.unit_f64().unwrap()).collect();
        let mean = |r: std::ops::Range<usize>| -> Vec<f64> {
            (0..2)
                .map(|d| unit[r.clone()].iter().map(|p| p[d]).sum::<f64>() / 10.0)
                .collect()
        };
        let (m0, m1) = (mean(0..10), mean(10..20));
        for (i, p) in unit.iter().enumerate() {
            let own_nearer = squared_euclidean(p, &m0) < squared_euclidean(p, &m1);
            assert_eq!(own_nearer, i < 10);
        }
        let fit = KMeans::new(2).seed(7).fit(&pts).unwrap();
        let planted: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        assert_eq!(fit.labels, planted);
    }
}
