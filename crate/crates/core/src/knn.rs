//! k-nearest-neighbor graphs: an exhaustive scan and nearest-neighbor descent.
//!
//! Ties in distance are broken by ascending point index everywhere, so both
//! builders are pure functions of their inputs (and seed).

use std::cmp::Ordering;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Metric};
use crate::error::{invalid, Result};
use crate::rng::{RngState, Stream};

/// Directed kNN graph stored as two row-major `n x k` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborGraph {
    /// Wraps precomputed tables after checking the graph invariants.
    pub fn new(k: usize, indices: Vec<usize>, distances: Vec<f64>) -> Result<Self> {
        if k == 0 || indices.len() != distances.len() || indices.len() % k != 0 {
            return Err(invalid("neighbor graph", "tables are not n x k"));
        }
        let g = Self {
            k,
            indices,
            distances,
        };
        let n = g.n_points();
        for i in 0..n {
            let (ids, ds) = g.row(i);
            for (j, &t) in ids.iter().enumerate() {
                if t >= n || t == i || ids[..j].contains(&t) {
                    return Err(invalid("neighbor graph", format!("row {i} has an invalid neighbor {t}")));
                }
                if !(ds[j] >= 0.0) || (j > 0 && ds[j] < ds[j - 1]) {
                    return Err(invalid("neighbor graph", format!("row {i} distances not ascending")));
                }
            }
        }
        Ok(g)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_points(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.indices[r.clone()], &self.distances[r])
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }
}

#[inline]
fn cmp_candidate(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(invalid(
            "k",
            format!("need 1 <= k <= n - 1, got k = {k} with n = {n}"),
        ));
    }
    Ok(())
}

/// Exhaustive kNN: every pair is evaluated.
pub fn exact_knn(data: &DataMatrix, metric: Metric, k: usize) -> Result<NeighborGraph> {
    let n = data.n_samples();
    check_k(n, k)?;
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (data.distance(metric, i, j), j))
                .collect();
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, |a, b| cmp_candidate(*a, *b));
                cand.truncate(k);
            }
            cand.sort_unstable_by(|a, b| cmp_candidate(*a, *b));
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for (ids, ds) in rows {
        indices.extend(ids);
        distances.extend(ds);
    }
    Ok(NeighborGraph {
        k,
        indices,
        distances,
    })
}

/// Settings for nearest-neighbor descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnDescentParams {
    pub max_iters: usize,
    /// Stop once fewer than `delta * n * k` heap updates happen in an iteration.
    pub delta: f64,
}

impl Default for NnDescentParams {
    fn default() -> Self {
        Self {
            max_iters: 16,
            delta: 0.001,
        }
    }
}

/// Fixed-size max-heaps, one per point, keyed by (distance, index).
struct NeighborHeaps {
    k: usize,
    ids: Vec<usize>,
    dists: Vec<f64>,
    is_new: Vec<bool>,
}

impl NeighborHeaps {
    fn worst(&self, i: usize) -> (f64, usize) {
        (self.dists[i * self.k], self.ids[i * self.k])
    }

    /// Inserts `(d, j)` into row `i` if it beats the current worst and is absent.
    fn push(&mut self, i: usize, d: f64, j: usize) -> bool {
        if cmp_candidate((d, j), self.worst(i)) != Ordering::Less {
            return false;
        }
        let base = i * self.k;
        if self.ids[base..base + self.k].contains(&j) {
            return false;
        }
        self.ids[base] = j;
        self.dists[base] = d;
        self.is_new[base] = true;
        self.sift_down(base, 0);
        true
    }

    fn sift_down(&mut self, base: usize, mut pos: usize) {
        let k = self.k;
        loop {
            let l = 2 * pos + 1;
            if l >= k {
                break;
            }
            let r = l + 1;
            let key = |p: usize| (self.dists[base + p], self.ids[base + p]);
            let mut big = l;
            if r < k && cmp_candidate(key(r), key(l)) == Ordering::Greater {
                big = r;
            }
            if cmp_candidate(key(big), key(pos)) != Ordering::Greater {
                break;
            }
            self.ids.swap(base + pos, base + big);
            self.dists.swap(base + pos, base + big);
            self.is_new.swap(base + pos, base + big);
            pos = big;
        }
    }

    fn heapify(&mut self, i: usize) {
        let base = i * self.k;
        for pos in (0..self.k / 2).rev() {
            self.sift_down(base, pos);
        }
    }

    fn into_graph(self) -> NeighborGraph {
        let k = self.k;
        let n = self.ids.len() / k;
        let mut indices = Vec::with_capacity(n * k);
        let mut distances = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut row: Vec<(f64, usize)> = (0..k)
                .map(|p| (self.dists[i * k + p], self.ids[i * k + p]))
                .collect();
            row.sort_unstable_by(|a, b| cmp_candidate(*a, *b));
            for (d, j) in row {
                indices.push(j);
                distances.push(d);
            }
        }
        NeighborGraph {
            k,
            indices,
            distances,
        }
    }
}

/// Approximate kNN by nearest-neighbor descent: random start, then repeated
/// local joins over neighbors and reverse neighbors.
pub fn nn_descent(
    data: &DataMatrix,
    metric: Metric,
    k: usize,
    rng: &RngState,
    params: NnDescentParams,
) -> Result<NeighborGraph> {
    let n = data.n_samples();
    check_k(n, k)?;
    if params.max_iters == 0 {
        return Err(invalid("max_iters", "must be at least 1"));
    }
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {}", params.delta)));
    }
    let mut rng = rng.stream(Stream::KnnInit);

    let mut heaps = NeighborHeaps {
        k,
        ids: vec![0; n * k],
        dists: vec![0.0; n * k],
        is_new: vec![true; n * k],
    };
    for i in 0..n {
        let picks = sample(&mut rng, n - 1, k);
        for (p, j) in picks.into_iter().enumerate() {
            let j = if j >= i { j + 1 } else { j };
            heaps.ids[i * k + p] = j;
        }
    }
    let init_d: Vec<f64> = (0..n * k)
        .into_par_iter()
        .map(|e| data.distance(metric, e / k, heaps.ids[e]))
        .collect();
    heaps.dists = init_d;
    for i in 0..n {
        heaps.heapify(i);
    }

    let threshold = params.delta * (n * k) as f64;
    for _iter in 0..params.max_iters {
        let mut new_c: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut old_c: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut rev_new: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut rev_old: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for p in 0..k {
                let e = i * k + p;
                let j = heaps.ids[e];
                if heaps.is_new[e] {
                    new_c[i].push(j);
                    rev_new[j].push(i);
                    heaps.is_new[e] = false;
                } else {
                    old_c[i].push(j);
                    rev_old[j].push(i);
                }
            }
        }
        for i in 0..n {
            for (cands, rev) in [(&mut new_c[i], &rev_new[i]), (&mut old_c[i], &rev_old[i])] {
                if rev.len() > k {
                    cands.extend(sample(&mut rng, rev.len(), k).into_iter().map(|p| rev[p]));
                } else {
                    cands.extend_from_slice(rev);
                }
                cands.sort_unstable();
                cands.dedup();
            }
        }

        let mut updates = 0usize;
        const BLOCK: usize = 512;
        for start in (0..n).step_by(BLOCK) {
            let end = (start + BLOCK).min(n);
            let heaps_ref = &heaps;
            let pairs: Vec<Vec<(usize, usize, f64)>> = (start..end)
                .into_par_iter()
                .map(|v| {
                    let news = &new_c[v];
                    let olds = &old_c[v];
                    let mut out = Vec::new();
                    let mut consider = |a: usize, b: usize| {
                        if a == b {
                            return;
                        }
                        let d = data.distance(metric, a, b);
                        let (wa, ia) = heaps_ref.worst(a);
                        let (wb, ib) = heaps_ref.worst(b);
                        if cmp_candidate((d, b), (wa, ia)) == Ordering::Less
                            || cmp_candidate((d, a), (wb, ib)) == Ordering::Less
                        {
                            out.push((a, b, d));
                        }
                    };
                    for (x, &a) in news.iter().enumerate() {
                        for &b in &news[x + 1..] {
                            consider(a, b);
                        }
                        for &b in olds {
                            consider(a, b);
                        }
                    }
                    out
                })
                .collect();
            for (a, b, d) in pairs.into_iter().flatten() {
                updates += heaps.push(a, d, b) as usize;
                updates += heaps.push(b, d, a) as usize;
            }
        }
        if (updates as f64) < threshold {
            break;
        }
    }
    Ok(heaps.into_graph())
}

/// Mean over points of the fraction of true neighbors recovered.
pub fn recall(approx: &NeighborGraph, exact: &NeighborGraph) -> f64 {
    let n = exact.n_points();
    let k = exact.k();
    let mut total = 0.0;
    for i in 0..n {
        let (truth, _) = exact.row(i);
        let (got, _) = approx.row(i);
        let hits = got.iter().filter(|j| truth.contains(j)).count();
        total += hits as f64 / k as f64;
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = RngState::new(seed).stream(Stream::Custom(0));
        let v: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        DataMatrix::from_dense(n, d, v).unwrap()
    }

    /// Independent O(n^2) oracle: full sort of every row.
    fn brute_force(data: &DataMatrix, metric: Metric, k: usize) -> Vec<Vec<usize>> {
        let n = data.n_samples();
        (0..n)
            .map(|i| {
                let xi = data.dense_row(i);
                let mut all: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (metric.dense(&xi, &data.dense_row(j)), j))
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                all.into_iter().take(k).map(|p| p.1).collect()
            })
            .collect()
    }

    #[test]
    fn exact_line_example() {
        let data = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0]]).unwrap();
        let g = exact_knn(&data, Metric::Euclidean, 1).unwrap();
        assert_eq!(g.indices(), &[1, 0, 1]);
        assert_eq!(g.distances(), &[1.0, 1.0, 9.0]);
    }

    #[test]
    fn exact_full_rows() {
        let data = random_points(12, 3, 1);
        let g = exact_knn(&data, Metric::Euclidean, 11).unwrap();
        for i in 0..12 {
            let mut ids = g.row(i).0.to_vec();
            ids.sort();
            let expect: Vec<usize> = (0..12).filter(|&j| j != i).collect();
            assert_eq!(ids, expect);
        }
    }

    #[test]
    fn exact_matches_brute_force() {
        let data = random_points(100, 2, 2);
        let g = exact_knn(&data, Metric::Euclidean, 5).unwrap();
        let oracle = brute_force(&data, Metric::Euclidean, 5);
        for i in 0..100 {
            assert_eq!(g.row(i).0, oracle[i].as_slice(), "row {i}");
        }
    }

    #[test]
    fn k_out_of_range() {
        let data = random_points(5, 2, 3);
        assert!(exact_knn(&data, Metric::Euclidean, 5).is_err());
        assert!(exact_knn(&data, Metric::Euclidean, 0).is_err());
        assert!(nn_descent(&data, Metric::Euclidean, 5, &RngState::new(0), NnDescentParams::default()).is_err());
    }

    #[test]
    fn descent_recall_small() {
        let data = random_points(50, 3, 4);
        let exact = exact_knn(&data, Metric::Euclidean, 10).unwrap();
        for seed in 0..5 {
            let g = nn_descent(&data, Metric::Euclidean, 10, &RngState::new(seed), NnDescentParams::default()).unwrap();
            let r = recall(&g, &exact);
            assert!(r >= 0.9, "seed {seed}: recall {r}");
            NeighborGraph::new(g.k(), g.indices().to_vec(), g.distances().to_vec()).unwrap();
        }
    }

    #[test]
    fn descent_full_k_is_exact() {
        let data = random_points(20, 2, 5);
        let exact = exact_knn(&data, Metric::Euclidean, 19).unwrap();
        let g = nn_descent(&data, Metric::Euclidean, 19, &RngState::new(9), NnDescentParams::default()).unwrap();
        assert_eq!(recall(&g, &exact), 1.0);
    }

    #[test]
    fn descent_identical_points() {
        let data = DataMatrix::from_dense(30, 2, vec![1.5; 60]).unwrap();
        let g = nn_descent(&data, Metric::Euclidean, 5, &RngState::new(1), NnDescentParams::default()).unwrap();
        assert!(g.distances().iter().all(|&d| d == 0.0));
        NeighborGraph::new(5, g.indices().to_vec(), g.distances().to_vec()).unwrap();
    }

    #[test]
    fn descent_deterministic() {
        let data = random_points(200, 4, 6);
        let p = NnDescentParams::default();
        let a = nn_descent(&data, Metric::Manhattan, 8, &RngState::new(3), p).unwrap();
        let b = nn_descent(&data, Metric::Manhattan, 8, &RngState::new(3), p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_descent_params() {
        let data = random_points(10, 2, 7);
        let bad = NnDescentParams { max_iters: 0, delta: 0.001 };
        assert!(nn_descent(&data, Metric::Euclidean, 3, &RngState::new(0), bad).is_err());
        let bad = NnDescentParams { max_iters: 3, delta: 1.5 };
        assert!(nn_descent(&data, Metric::Euclidean, 3, &RngState::new(0), bad).is_err());
    }
}
