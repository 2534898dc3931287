//! Fuzzy graph construction: per-point bandwidth calibration, directed
//! membership weights and probabilistic-union symmetrization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Metric};
use crate::error::{invalid, Result};
use crate::knn::{exact_knn, nn_descent, NeighborGraph, NnDescentParams};
use crate::rng::RngState;

/// Stop bisecting once the membership sum is this close to `log2(k)`.
pub const SIGMA_TOLERANCE: f64 = 1e-5;
const SIGMA_MAX_BISECTIONS: usize = 64;
/// Lower bandwidth clamp, relative to the mean positive neighbor distance.
const SIGMA_FLOOR_RATIO: f64 = 1e-3;
/// Symmetrized weights below this are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-8;

/// Result of the bandwidth search for one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaFit {
    pub sigma: f64,
    /// `sum_j exp(-max(0, d_j - rho) / sigma) - log2(k)` at the returned sigma.
    pub residual: f64,
    /// Set when sigma sits on a search bound instead of solving the equation.
    pub clamped: bool,
}

/// `sum_j exp(-max(0, d_j - rho) / sigma)`.
pub fn membership_sum(dists: &[f64], rho: f64, sigma: f64) -> f64 {
    dists.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum()
}

/// Distance to the closest neighbor at positive distance, or 0 if there is none.
pub fn local_rho(dists: &[f64]) -> f64 {
    dists
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
        .unwrap_or(0.0)
}

fn sigma_floor(dists: &[f64]) -> f64 {
    let (sum, count) = dists
        .iter()
        .filter(|&&d| d > 0.0)
        .fold((0.0, 0usize), |(s, c), &d| (s + d, c + 1));
    if count == 0 {
        SIGMA_FLOOR_RATIO
    } else {
        SIGMA_FLOOR_RATIO * sum / count as f64
    }
}

/// Finds sigma with `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)`, where
/// `k = dists.len()`, by doubling an upper bracket from 1 and then bisecting.
pub fn smooth_knn_dist(dists: &[f64], rho: f64) -> SigmaFit {
    let k = dists.len();
    let target = (k as f64).log2();
    let floor = sigma_floor(dists);
    let at = |sigma: f64| membership_sum(dists, rho, sigma) - target;

    let r_lo = at(floor);
    if r_lo >= 0.0 {
        return SigmaFit {
            sigma: floor,
            residual: r_lo,
            clamped: r_lo > SIGMA_TOLERANCE,
        };
    }

    let mut hi = floor.max(1.0);
    let cap = 2f64.powi(64);
    let mut r_hi = at(hi);
    while r_hi < 0.0 {
        if hi >= cap {
            return SigmaFit {
                sigma: hi,
                residual: r_hi,
                clamped: true,
            };
        }
        hi *= 2.0;
        r_hi = at(hi);
    }
    let mut lo = floor;
    let (mut best, mut best_r) = (hi, r_hi);
    for _ in 0..SIGMA_MAX_BISECTIONS {
        if best_r.abs() <= SIGMA_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let r = at(mid);
        if r.abs() < best_r.abs() {
            best = mid;
            best_r = r;
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    SigmaFit {
        sigma: best,
        residual: best_r,
        clamped: best_r.abs() > SIGMA_TOLERANCE,
    }
}

/// Outgoing memberships of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFuzzySet {
    pub rho: f64,
    pub sigma: SigmaFit,
    pub targets: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Memberships `exp(-max(0, d - rho) / sigma)` of one kNN row.
pub fn local_fuzzy_simplicial_set(indices: &[usize], dists: &[f64]) -> LocalFuzzySet {
    let rho = local_rho(dists);
    let sigma = smooth_knn_dist(dists, rho);
    let weights = dists
        .iter()
        .map(|&d| (-(d - rho).max(0.0) / sigma.sigma).exp())
        .collect();
    LocalFuzzySet {
        rho,
        sigma,
        targets: indices.to_vec(),
        weights,
    }
}

/// Directed membership graph: exactly the kNN edges with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedFuzzyGraph {
    n_vertices: usize,
    /// `(source, target, weight)` grouped by source.
    edges: Vec<(usize, usize, f64)>,
    rho: Vec<f64>,
    sigma: Vec<f64>,
    clamped: Vec<bool>,
}

impl DirectedFuzzyGraph {
    pub fn from_neighbors(knn: &NeighborGraph) -> Self {
        let n = knn.n_points();
        let sets: Vec<LocalFuzzySet> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (ids, ds) = knn.row(i);
                local_fuzzy_simplicial_set(ids, ds)
            })
            .collect();
        let mut edges = Vec::with_capacity(n * knn.k());
        let mut rho = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        let mut clamped = Vec::with_capacity(n);
        for (i, set) in sets.into_iter().enumerate() {
            edges.extend(set.targets.iter().zip(&set.weights).map(|(&j, &w)| (i, j, w)));
            rho.push(set.rho);
            sigma.push(set.sigma.sigma);
            clamped.push(set.sigma.clamped);
        }
        Self {
            n_vertices: n,
            edges,
            rho,
            sigma,
            clamped,
        }
    }

    /// Builds a directed graph from raw edges (no calibration data).
    pub fn from_edges(n_vertices: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, w) in &edges {
            if i >= n_vertices || j >= n_vertices || i == j {
                return Err(invalid("edge", format!("({i}, {j}) invalid for {n_vertices} vertices")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(invalid("edge", format!("weight {w} of ({i}, {j}) outside (0, 1]")));
            }
        }
        Ok(Self {
            n_vertices,
            edges,
            rho: vec![0.0; n_vertices],
            sigma: vec![0.0; n_vertices],
            clamped: vec![false; n_vertices],
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n_clamped(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// Probabilistic t-conorm `a + b - ab`, evaluated as `hi + (lo - hi * lo)`
/// so that it is bit-for-bit commutative, an argument equal to 1 gives
/// exactly 1 and an argument equal to 0 returns the other.
#[inline]
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi * lo)
}

/// Undirected fuzzy graph; each edge stored once with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyGraph {
    n_vertices: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl FuzzyGraph {
    /// Builds a graph from `(i, j, w)` with `i < j`, sorted, unique and `w` in (0, 1].
    pub fn from_edges(n_vertices: usize, mut edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
            let (i, j, w) = *e;
            if j >= n_vertices || i == j {
                return Err(invalid("edge", format!("({i}, {j}) invalid for {n_vertices} vertices")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(invalid("edge", format!("weight {w} of ({i}, {j}) outside (0, 1]")));
            }
        }
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if edges.windows(2).any(|p| (p[0].0, p[0].1) == (p[1].0, p[1].1)) {
            return Err(invalid("edge", "duplicate undirected edge"));
        }
        Ok(Self { n_vertices, edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Weighted degree of every vertex.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n_vertices];
        for &(i, j, w) in &self.edges {
            deg[i] += w;
            deg[j] += w;
        }
        deg
    }

    /// Symmetric adjacency lists `(neighbor, weight)`, each sorted by neighbor.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for row in adj.iter_mut() {
            row.sort_by_key(|p| p.0);
        }
        adj
    }

    /// Weight of the edge between `i` and `j`, 0 if absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map(|p| self.edges[p].2)
            .unwrap_or(0.0)
    }

    /// Subgraph on `vertices`, relabelled to `0..vertices.len()` in that order.
    pub fn induced(&self, vertices: &[usize]) -> FuzzyGraph {
        let mut map = vec![usize::MAX; self.n_vertices];
        for (new, &old) in vertices.iter().enumerate() {
            map[old] = new;
        }
        let mut edges: Vec<(usize, usize, f64)> = self
            .edges
            .iter()
            .filter_map(|&(i, j, w)| {
                let (a, b) = (map[i], map[j]);
                (a != usize::MAX && b != usize::MAX).then(|| (a.min(b), a.max(b), w))
            })
            .collect();
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        FuzzyGraph {
            n_vertices: vertices.len(),
            edges,
        }
    }
}

/// Merges `w(i->j)` and `w(j->i)` with the probabilistic union, evaluating
/// each unordered pair once. Weights below [`PRUNE_THRESHOLD`] are dropped.
pub fn symmetrize(directed: &DirectedFuzzyGraph) -> FuzzyGraph {
    // (lo, hi, forward weight lo->hi, backward weight hi->lo)
    let mut halves: Vec<(usize, usize, f64, f64)> = directed
        .edges
        .iter()
        .map(|&(i, j, w)| {
            if i < j {
                (i, j, w, 0.0)
            } else {
                (j, i, 0.0, w)
            }
        })
        .collect();
    halves.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut edges = Vec::with_capacity(halves.len());
    let mut p = 0;
    while p < halves.len() {
        let (i, j, mut fwd, mut bwd) = halves[p];
        let mut q = p + 1;
        while q < halves.len() && halves[q].0 == i && halves[q].1 == j {
            // a repeated directed edge keeps its larger weight
            fwd = fwd.max(halves[q].2);
            bwd = bwd.max(halves[q].3);
            q += 1;
        }
        let w = fuzzy_union(fwd, bwd);
        if w >= PRUNE_THRESHOLD {
            edges.push((i, j, w));
        }
        p = q;
    }
    FuzzyGraph {
        n_vertices: directed.n_vertices,
        edges,
    }
}

/// How the kNN graph is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnOptions {
    /// Use the exhaustive scan when `n <= exact_threshold`.
    pub exact_threshold: usize,
    pub descent: NnDescentParams,
}

impl Default for KnnOptions {
    fn default() -> Self {
        Self {
            exact_threshold: 4096,
            descent: NnDescentParams::default(),
        }
    }
}

/// Everything produced while building the fuzzy graph.
#[derive(Debug, Clone)]
pub struct GraphBuild {
    pub knn: NeighborGraph,
    pub directed: DirectedFuzzyGraph,
    pub graph: FuzzyGraph,
    pub used_exact_knn: bool,
}

/// kNN search, per-point calibration and symmetrization.
pub fn build_fuzzy_graph(
    data: &DataMatrix,
    metric: Metric,
    k: usize,
    rng: &RngState,
    opts: &KnnOptions,
) -> Result<GraphBuild> {
    if k < 2 {
        return Err(invalid("n_neighbors", format!("must be at least 2, got {k}")));
    }
    let used_exact_knn = data.n_samples() <= opts.exact_threshold;
    let knn = if used_exact_knn {
        exact_knn(data, metric, k)?
    } else {
        nn_descent(data, metric, k, rng, opts.descent)?
    };
    let directed = DirectedFuzzyGraph::from_neighbors(&knn);
    let graph = symmetrize(&directed);
    Ok(GraphBuild {
        knn,
        directed,
        graph,
        used_exact_knn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn sigma_closed_form() {
        // 1 + 3 exp(-c / sigma) = 2  =>  sigma = c / ln 3
        let (rho, c) = (0.7, 1.3);
        let fit = smooth_knn_dist(&[rho, rho + c, rho + c, rho + c], rho);
        assert!(!fit.clamped);
        let expect = c / 3f64.ln();
        assert!((fit.sigma - expect).abs() / expect < 1e-5, "{} vs {expect}", fit.sigma);
    }

    #[test]
    fn sigma_all_at_rho_is_clamped() {
        let fit = smooth_knn_dist(&[2.0; 6], 2.0);
        assert!(fit.clamped);
        assert!((fit.sigma - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn sigma_residual_random_rows() {
        let mut rng = RngState::new(11).stream(Stream::Custom(1));
        for _ in 0..200 {
            let mut d: Vec<f64> = (0..16).map(|_| rng.random_range(0.1..5.0)).collect();
            d.sort_by(f64::total_cmp);
            let rho = local_rho(&d);
            let fit = smooth_knn_dist(&d, rho);
            assert!(!fit.clamped);
            let resid = membership_sum(&d, rho, fit.sigma) - 4.0;
            assert!(resid.abs() <= SIGMA_TOLERANCE, "{resid}");
        }
    }

    #[test]
    fn local_set_weights() {
        let (rho, sigma_dists) = (1.0, [1.0, 1.5, 2.0, 3.0]);
        let set = local_fuzzy_simplicial_set(&[4, 5, 6, 7], &sigma_dists);
        assert_eq!(set.rho, rho);
        assert_eq!(set.weights[0], 1.0);
        let s = set.sigma.sigma;
        let probe = local_fuzzy_simplicial_set(&[1, 2], &[0.5, 0.5 + s]);
        assert_eq!(probe.weights[0], 1.0);
        // a neighbor at rho + sigma gets e^-1
        let w = (-((rho + s) - rho) / s).exp();
        assert!((w - (-1f64).exp()).abs() < 1e-15);
        assert!((set.weights.iter().sum::<f64>() - 2.0).abs() <= SIGMA_TOLERANCE);
    }

    #[test]
    fn duplicates_give_unit_weights() {
        let set = local_fuzzy_simplicial_set(&[1, 2, 3], &[0.0, 0.0, 0.0]);
        assert_eq!(set.rho, 0.0);
        assert!(set.weights.iter().all(|&w| w == 1.0));
        assert_eq!(set.sigma.sigma, SIGMA_FLOOR_RATIO);
    }

    #[test]
    fn union_examples() {
        assert_eq!(fuzzy_union(0.5, 0.0), 0.5);
        assert_eq!(fuzzy_union(0.0, 0.5), 0.5);
        assert_eq!(fuzzy_union(1.0, 1.0), 1.0);
        // 0.9 - 0.2
        assert!((fuzzy_union(0.5, 0.4) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn collinear_equidistant() {
        let data = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let build = build_fuzzy_graph(&data, Metric::Euclidean, 2, &RngState::new(0), &KnnOptions::default()).unwrap();
        let g = &build.graph;
        // the end points see each other only beyond their nearest neighbor,
        // at a shifted distance of 1 against a clamped bandwidth: pruned
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(g.weight(0, 1), g.weight(1, 2));
        assert_eq!(g.weight(0, 1), 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
    }

    fn random_data(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = RngState::new(seed).stream(Stream::Custom(2));
        let v: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        DataMatrix::from_dense(n, d, v).unwrap()
    }

    /// Dense oracle for `A + A^T - A o A^T`.
    fn dense_union(directed: &DirectedFuzzyGraph) -> Vec<Vec<f64>> {
        let n = directed.n_vertices();
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j, w) in directed.edges() {
            a[i][j] = w;
        }
        let mut b = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (a[i][j].max(a[j][i]), a[i][j].min(a[j][i]));
                b[i][j] = x + (y - x * y);
            }
        }
        b
    }

    #[test]
    fn sparse_union_matches_dense_oracle() {
        let data = random_data(200, 5, 3);
        let build = build_fuzzy_graph(&data, Metric::Euclidean, 10, &RngState::new(1), &KnnOptions::default()).unwrap();
        let dense = dense_union(&build.directed);
        let mut seen = 0;
        for i in 0..200 {
            for j in 0..200 {
                if i == j {
                    continue;
                }
                let expect = if dense[i][j] >= PRUNE_THRESHOLD { dense[i][j] } else { 0.0 };
                assert_eq!(build.graph.weight(i, j), expect, "({i},{j})");
                seen += (expect > 0.0) as usize;
            }
        }
        assert_eq!(seen, 2 * build.graph.n_edges());
    }

    #[test]
    fn local_connectivity_holds() {
        let data = random_data(150, 3, 4);
        let build = build_fuzzy_graph(&data, Metric::Euclidean, 8, &RngState::new(2), &KnnOptions::default()).unwrap();
        let adj = build.graph.adjacency();
        for (i, row) in adj.iter().enumerate() {
            assert!(!row.is_empty(), "vertex {i} isolated");
            assert!(row.iter().any(|&(_, w)| w == 1.0), "vertex {i}");
            assert!(row.iter().all(|&(_, w)| w > 0.0 && w <= 1.0));
        }
    }

    #[test]
    fn from_edges_validation() {
        assert!(FuzzyGraph::from_edges(3, vec![(0, 3, 0.5)]).is_err());
        assert!(FuzzyGraph::from_edges(3, vec![(0, 1, 1.5)]).is_err());
        assert!(FuzzyGraph::from_edges(3, vec![(0, 1, 0.5), (1, 0, 0.2)]).is_err());
        let g = FuzzyGraph::from_edges(3, vec![(2, 0, 0.5)]).unwrap();
        assert_eq!(g.edges(), &[(0, 2, 0.5)]);
    }

    proptest! {
        #[test]
        fn membership_sum_monotone(
            mut d in proptest::collection::vec(0.0f64..10.0, 2..30),
            s1 in 1e-3f64..50.0,
            s2 in 1e-3f64..50.0,
        ) {
            d.sort_by(f64::total_cmp);
            let rho = local_rho(&d);
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(membership_sum(&d, rho, lo) <= membership_sum(&d, rho, hi));
        }

        #[test]
        fn scaling_distances_scales_bandwidth(
            mut d in proptest::collection::vec(0.01f64..10.0, 4..20),
            c in 0.01f64..100.0,
        ) {
            d.sort_by(f64::total_cmp);
            let ids: Vec<usize> = (0..d.len()).collect();
            let base = local_fuzzy_simplicial_set(&ids, &d);
            let scaled_d: Vec<f64> = d.iter().map(|x| x * c).collect();
            let scaled = local_fuzzy_simplicial_set(&ids, &scaled_d);
            prop_assert!((scaled.rho - c * base.rho).abs() <= 1e-12 * c * base.rho.max(1.0));
            prop_assume!(!base.sigma.clamped);
            prop_assert!((scaled.sigma.sigma / (c * base.sigma.sigma) - 1.0).abs() < 1e-3);
            for (a, b) in base.weights.iter().zip(&scaled.weights) {
                prop_assert!((a - b).abs() < 1e-4);
            }
        }

        #[test]
        fn union_bounds(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let u = fuzzy_union(a, b);
            prop_assert_eq!(u, fuzzy_union(b, a));
            prop_assert!(u >= a.max(b) - 1e-15);
            prop_assert!(u <= (a + b).min(1.0) + 1e-15);
        }
    }
}
