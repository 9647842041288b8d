use super::{canonical_labels, unit_points, ClusterError, DistanceMatrix};
use crate::model::Embedding;

/// One agglomeration step. Clusters are named by their smallest point index;
/// after the merge the union keeps the name `left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Full complete-linkage merge history under cosine distance.
///
/// Each step merges the pair of active clusters with the smallest linkage
/// distance; equal distances go to the lexicographically smallest
/// `(left, right)` name pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn build(points: &[Embedding]) -> Result<Self, ClusterError> {
        let unit = unit_points(points)?;
        Ok(Self::from_distances(&DistanceMatrix::cosine(&unit)))
    }

    pub(crate) fn from_distances(dist: &DistanceMatrix) -> Self {
        let n = dist.len();
        let mut d: Vec<f64> = (0..n).flat_map(|i| dist.row(i).iter().copied()).collect();
        let mut active = vec![true; n];
        let mut size = vec![1usize; n];
        // Row-wise nearest active neighbour, lowest index on ties.
        let mut nn: Vec<(usize, f64)> = vec![(usize::MAX, f64::INFINITY); n];
        let row_nn = |d: &[f64], active: &[bool], i: usize| -> (usize, f64) {
            let mut best = (usize::MAX, f64::INFINITY);
            for j in 0..n {
                if j != i && active[j] && d[i * n + j] < best.1 {
                    best = (j, d[i * n + j]);
                }
            }
            best
        };
        for (i, slot) in nn.iter_mut().enumerate() {
            *slot = row_nn(&d, &active, i);
        }

        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut pick: Option<(f64, usize, usize)> = None;
            for i in (0..n).filter(|&i| active[i]) {
                let (j, dij) = nn[i];
                let cand = (dij, i.min(j), i.max(j));
                if pick.is_none_or(|p| (cand.0, cand.1, cand.2) < p) {
                    pick = Some(cand);
                }
            }
            let (distance, a, b) = pick.expect("two active clusters remain");
            for x in 0..n {
                if active[x] && x != a && x != b {
                    let linked = d[a * n + x].max(d[b * n + x]);
                    d[a * n + x] = linked;
                    d[x * n + a] = linked;
                }
            }
            active[b] = false;
            size[a] += size[b];
            merges.push(Merge {
                left: a,
                right: b,
                distance,
                size: size[a],
            });
            // Complete linkage only grows distances to the union, so rows that
            // pointed elsewhere keep a valid nearest neighbour.
            for x in 0..n {
                if active[x] && (x == a || nn[x].0 == a || nn[x].0 == b) {
                    nn[x] = row_nn(&d, &active, x);
                }
            }
        }
        Self { n, merges }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Labels after performing the first `n - k` merges.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        if self.n == 0 {
            return Err(ClusterError::EmptyInput);
        }
        if k == 0 {
            return Err(ClusterError::ZeroClusters);
        }
        if k > self.n {
            return Err(ClusterError::TooManyClusters { k, n: self.n });
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = x;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        for m in &self.merges[..self.n - k] {
            let (ra, rb) = (find(&mut parent, m.left), find(&mut parent, m.right));
            parent[rb] = ra;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        Ok(canonical_labels(&roots))
    }
}

/// Complete-linkage agglomerative clustering with cosine distance, cut at `k`
/// clusters. Returns one label per point, numbered by first appearance.
pub fn hac_complete(points: &[Embedding], k: usize) -> Result<Vec<usize>, ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k > points.len() {
        return Err(ClusterError::TooManyClusters { k, n: points.len() });
    }
    Dendrogram::build(points)?.cut(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cosine_distance;

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
    fn identical_pair_merges_first_at_zero() {
        let pts = circle(&[0.0, 40.0, 40.0, 130.0]);
        let dendro = Dendrogram::build(&pts).unwrap();
        let first = dendro.merges()[0];
        assert_eq!((first.left, first.right), (1, 2));
        assert!(first.distance.abs() < 1e-12);
        assert_eq!(dendro.cut(3).unwrap(), vec![0, 1, 1, 2]);
    }

    #[test]
    fn k_equals_n_is_all_singletons() {
        let pts = circle(&[0.0, 40.0, 80.0]);
        assert_eq!(hac_complete(&pts, 3).unwrap(), vec![0, 1, 2]);
    }

    /// Replays complete linkage by brute force: at every step scan all pairs
    /// of current clusters, score each by its maximum member distance, and
    /// merge the lowest.
    fn brute_force_complete(pts: &[Embedding], k: usize) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..pts.len()).map(|i| vec![i]).collect();
        while clusters.len() > k {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut link: f64 = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            link = link.max(cosine_distance(&pts[i], &pts[j]).unwrap());
                        }
                    }
                    if link < best.0 {
                        best = (link, a, b);
                    }
                }
            }
            let merged = clusters.remove(best.2);
            clusters[best.1].extend(merged);
        }
        for c in &mut clusters {
            c.sort();
        }
        clusters.sort();
        clusters
    }

    #[test]
    fn four_point_circle_splits_at_the_gap() {
        let pts = circle(&[0.0, 10.0, 90.0, 100.0]);
        assert_eq!(brute_force_complete(&pts, 2), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(hac_complete(&pts, 2).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn agrees_with_brute_force_on_scattered_angles() {
        let degrees = [3.0, 17.0, 29.0, 61.0, 64.0, 130.0, 171.0, 200.0, 260.0, 333.0];
        let pts = circle(&degrees);
        let dendro = Dendrogram::build(&pts).unwrap();
        for k in 1..=degrees.len() {
            let labels = dendro.cut(k).unwrap();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &l) in labels.iter().enumerate() {
                groups[l].push(i);
            }
            groups.sort();
            assert_eq!(groups, brute_force_complete(&pts, k), "k = {k}");
        }
    }

    #[test]
    fn errors() {
        assert_eq!(hac_complete(&[], 1), Err(ClusterError::EmptyInput));
        assert_eq!(
            hac_complete(&circle(&[0.0]), 2),
            Err(ClusterError::TooManyClusters { k: 2, n: 1 })
        );
    }
}
