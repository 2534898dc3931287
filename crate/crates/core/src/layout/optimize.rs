//! Sampled stochastic gradient descent on the fuzzy cross entropy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::curve::{phi, CurveParams};
use super::gradient::{attractive_coefficient, repulsive_coefficient};
use crate::embedding::EmbeddingCoords;
use crate::error::{invalid, Error, Result};
use crate::fuzzy::FuzzyGraph;
use crate::rng::{RngState, StageRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub min_dist: f64,
    pub spread: f64,
    pub n_epochs: usize,
    pub n_neg_samples: usize,
    pub initial_alpha: f64,
    /// Added to the squared distance in the repulsive gradient.
    pub repulsion_eps: f64,
    /// Per-component gradient bound, applied before the learning rate.
    pub grad_clip: f64,
    /// Also pull the tail of a sampled edge toward its head.
    pub move_other: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            min_dist: 0.1,
            spread: 1.0,
            n_epochs: 500,
            n_neg_samples: 5,
            initial_alpha: 1.0,
            repulsion_eps: 0.001,
            grad_clip: 4.0,
            move_other: true,
        }
    }
}

/// 500 epochs up to 10,000 points, 200 beyond.
pub fn default_n_epochs(n_samples: usize) -> usize {
    if n_samples <= 10_000 {
        500
    } else {
        200
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(invalid("spread", format!("must be positive, got {}", self.spread)));
        }
        if !(self.min_dist >= 0.0 && self.min_dist < 10.0 * self.spread) {
            return Err(invalid(
                "min_dist",
                format!("must satisfy 0 <= min_dist < 10 * spread, got {}", self.min_dist),
            ));
        }
        if self.n_epochs == 0 {
            return Err(invalid("n_epochs", "must be at least 1"));
        }
        if self.n_neg_samples == 0 {
            return Err(invalid("n_neg_samples", "must be at least 1"));
        }
        for (name, v) in [
            ("initial_alpha", self.initial_alpha),
            ("repulsion_eps", self.repulsion_eps),
            ("grad_clip", self.grad_clip),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Learning rate of epoch `e` (1-based): starts at `initial_alpha` and
    /// drops by `initial_alpha / n_epochs` after each epoch.
    pub fn alpha(&self, epoch: usize) -> f64 {
        self.initial_alpha * (1.0 - (epoch - 1) as f64 / self.n_epochs as f64)
    }
}

/// Uniform vertex draw used for negative samples.
#[inline]
pub fn sample_negative(rng: &mut StageRng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Runs `n_epochs` of edge-sampled SGD starting from `init`.
///
/// Every stored edge is visited once per epoch in each orientation; an
/// orientation `(head, tail)` fires with probability equal to the edge
/// weight, moves `head` along `grad log phi` (and `tail` the opposite way
/// when `move_other` is set), then pushes `head` away from
/// `n_neg_samples` uniformly drawn vertices along `grad log(1 - phi)`.
pub fn optimize_embedding(
    graph: &FuzzyGraph,
    init: &EmbeddingCoords,
    cfg: &OptimizerConfig,
    params: CurveParams,
    rng: &RngState,
) -> Result<EmbeddingCoords> {
    cfg.validate()?;
    let n = graph.n_vertices();
    if init.n_samples() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: init.n_samples(),
        });
    }
    let dim = init.dim();
    let mut y = init.clone();
    let mut edge_rng = rng.stream(Stream::EdgeSampling);
    let mut neg_rng = rng.stream(Stream::NegativeSampling);
    let clip = cfg.grad_clip;
    let mut delta = vec![0.0; dim];

    for epoch in 1..=cfg.n_epochs {
        let alpha = cfg.alpha(epoch);
        for &(i, j, w) in graph.edges() {
            for (head, tail) in [(i, j), (j, i)] {
                if edge_rng.random::<f64>() >= w {
                    continue;
                }
                let coords = y.as_mut_slice();
                let (h0, t0) = (head * dim, tail * dim);
                let mut sq = 0.0;
                for k in 0..dim {
                    delta[k] = coords[h0 + k] - coords[t0 + k];
                    sq += delta[k] * delta[k];
                }
                let c = attractive_coefficient(params, sq);
                for k in 0..dim {
                    let g = (c * delta[k]).clamp(-clip, clip);
                    coords[h0 + k] += alpha * g;
                    if cfg.move_other {
                        coords[t0 + k] -= alpha * g;
                    }
                }
                for _ in 0..cfg.n_neg_samples {
                    let other = sample_negative(&mut neg_rng, n);
                    let o0 = other * dim;
                    let mut sq = 0.0;
                    for k in 0..dim {
                        delta[k] = coords[h0 + k] - coords[o0 + k];
                        sq += delta[k] * delta[k];
                    }
                    let c = repulsive_coefficient(params, sq, cfg.repulsion_eps);
                    for k in 0..dim {
                        coords[h0 + k] += alpha * (c * delta[k]).clamp(-clip, clip);
                    }
                }
                if !coords[h0..h0 + dim].iter().all(|v| v.is_finite()) {
                    return Err(Error::Diverged {
                        epoch,
                        vertex: head,
                        head,
                        tail,
                    });
                }
            }
        }
    }
    Ok(y)
}

/// Bounds membership away from 0 and 1 so logarithms stay finite.
pub const MEMBERSHIP_EPS: f64 = 1e-12;

/// `mu log(mu / nu) + (1 - mu) log((1 - mu) / (1 - nu))`, with `0 log 0 = 0`.
pub fn cross_entropy_term(mu: f64, nu: f64) -> f64 {
    let mut t = 0.0;
    if mu > 0.0 {
        t += mu * (mu / nu.max(MEMBERSHIP_EPS)).ln();
    }
    if mu < 1.0 {
        t += (1.0 - mu) * ((1.0 - mu) / (1.0 - nu.min(1.0 - MEMBERSHIP_EPS))).ln();
    }
    t.max(0.0)
}

/// How non-edges are accounted for in [`cross_entropy`].
#[derive(Debug, Clone, Copy)]
pub enum NonEdgeTerm {
    /// Every unordered pair is evaluated.
    Exact,
    /// Unbiased estimate from uniformly drawn unordered pairs.
    Sampled { n_pairs: usize, seed: RngState },
}

/// Fuzzy cross entropy between the graph memberships and `phi` of the
/// embedding distances, summed over unordered pairs.
pub fn cross_entropy(
    graph: &FuzzyGraph,
    y: &EmbeddingCoords,
    params: CurveParams,
    non_edges: NonEdgeTerm,
) -> Result<f64> {
    let n = graph.n_vertices();
    if y.n_samples() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.n_samples(),
        });
    }
    let edge_sum: f64 = graph
        .edges()
        .iter()
        .map(|&(i, j, mu)| cross_entropy_term(mu, phi(params, y.sq_dist(i, j))))
        .sum();
    let repulsive = |i: usize, j: usize| cross_entropy_term(0.0, phi(params, y.sq_dist(i, j)));
    let non_edge_sum = match non_edges {
        NonEdgeTerm::Exact => {
            let adj = graph.adjacency();
            let mut total = 0.0;
            for i in 0..n {
                let mut nbrs = adj[i].iter().map(|p| p.0).peekable();
                for j in i + 1..n {
                    while nbrs.peek().is_some_and(|&v| v < j) {
                        nbrs.next();
                    }
                    if nbrs.peek() == Some(&j) {
                        continue;
                    }
                    total += repulsive(i, j);
                }
            }
            total
        }
        NonEdgeTerm::Sampled { n_pairs, seed } => {
            if n < 2 || n_pairs == 0 {
                0.0
            } else {
                let mut rng = seed.stream(Stream::Diagnostics);
                let mut acc = 0.0;
                for _ in 0..n_pairs {
                    let i = rng.random_range(0..n);
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    if graph.weight(i, j) == 0.0 {
                        acc += repulsive(i, j);
                    }
                }
                let total_pairs = (n * (n - 1) / 2) as f64;
                acc / n_pairs as f64 * total_pairs
            }
        }
    };
    Ok(edge_sum + non_edge_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::curve::fit_phi;

    #[test]
    fn cross_entropy_term_examples() {
        assert_eq!(cross_entropy_term(0.3, 0.3), 0.0);
        assert!((cross_entropy_term(1.0, 0.5) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(cross_entropy_term(0.0, 0.0), 0.0);
    }

    #[test]
    fn alpha_schedule() {
        let cfg = OptimizerConfig {
            n_epochs: 4,
            ..Default::default()
        };
        let a: Vec<f64> = (1..=4).map(|e| cfg.alpha(e)).collect();
        assert_eq!(a, vec![1.0, 0.75, 0.5, 0.25]);
    }

    #[test]
    fn config_validation() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            OptimizerConfig { n_epochs: 0, ..ok },
            OptimizerConfig { n_neg_samples: 0, ..ok },
            OptimizerConfig { min_dist: 10.0, ..ok },
            OptimizerConfig { spread: 0.0, ..ok },
            OptimizerConfig { grad_clip: -1.0, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn pure_attraction_shrinks_distance() {
        let g = FuzzyGraph::from_edges(2, vec![(0, 1, 1.0)]).unwrap();
        let init = EmbeddingCoords::from_rows(&[vec![-5.0, 0.0], vec![5.0, 0.0]]).unwrap();
        let cfg = OptimizerConfig {
            min_dist: 0.0,
            n_epochs: 50,
            ..Default::default()
        };
        let p = fit_phi(0.0, 1.0).unwrap();
        let out = optimize_embedding(&g, &init, &cfg, p, &RngState::new(3)).unwrap();
        assert!(out.sq_dist(0, 1) < init.sq_dist(0, 1));
    }

    #[test]
    fn empty_graph_leaves_coordinates() {
        let g = FuzzyGraph::from_edges(3, vec![]).unwrap();
        let init = EmbeddingCoords::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let out = optimize_embedding(&g, &init, &OptimizerConfig::default(), CurveParams::student_t(), &RngState::new(0)).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn updates_bounded_by_alpha_clip() {
        // one epoch, one edge, one negative sample: each coordinate moves at
        // most alpha * clip per gradient application
        let g = FuzzyGraph::from_edges(3, vec![(0, 1, 1.0)]).unwrap();
        let init = EmbeddingCoords::from_rows(&[vec![0.0, 0.0], vec![0.001, 0.0], vec![0.0, 0.002]]).unwrap();
        let cfg = OptimizerConfig {
            n_epochs: 1,
            n_neg_samples: 1,
            move_other: false,
            ..Default::default()
        };
        let out = optimize_embedding(&g, &init, &cfg, fit_phi(0.1, 1.0).unwrap(), &RngState::new(1)).unwrap();
        // two orientations, each one attractive + one repulsive application
        for i in 0..3 {
            for k in 0..2 {
                let moved = (out.row(i)[k] - init.row(i)[k]).abs();
                assert!(moved <= 4.0 * cfg.grad_clip * cfg.initial_alpha + 1e-12);
            }
        }
    }

    #[test]
    fn negative_sampling_is_uniform() {
        let n = 10;
        let draws = 1_000_000;
        let mut rng = RngState::new(5).stream(Stream::NegativeSampling);
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[sample_negative(&mut rng, n)] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "{c} vs {mean} +- {sd}");
        }
    }

    /// Dense oracle over all unordered pairs, written independently of the
    /// sparse edge walk.
    fn dense_cross_entropy(g: &FuzzyGraph, y: &EmbeddingCoords, p: CurveParams) -> f64 {
        let n = g.n_vertices();
        let mut mu = vec![vec![0.0; n]; n];
        for &(i, j, w) in g.edges() {
            mu[i][j] = w;
            mu[j][i] = w;
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let s: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                let nu = 1.0 / (1.0 + p.a * s.powf(p.b));
                let m = mu[i][j];
                let mut t = 0.0;
                if m > 0.0 {
                    t += m * (m / nu).ln();
                }
                t += (1.0 - m) * ((1.0 - m) / (1.0 - nu)).ln();
                total += t;
            }
        }
        total
    }

    #[test]
    fn cross_entropy_matches_dense() {
        use rand::Rng;
        let mut rng = RngState::new(8).stream(Stream::Custom(5));
        let n = 25;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.2 {
                    edges.push((i, j, rng.random_range(0.05..0.95)));
                }
            }
        }
        let g = FuzzyGraph::from_edges(n, edges).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let y = EmbeddingCoords::from_rows(&rows).unwrap();
        let p = CurveParams::new(1.58, 0.9).unwrap();
        let ours = cross_entropy(&g, &y, p, NonEdgeTerm::Exact).unwrap();
        let oracle = dense_cross_entropy(&g, &y, p);
        assert!((ours - oracle).abs() <= 1e-8, "{ours} vs {oracle}");

        let sampled = cross_entropy(&g, &y, p, NonEdgeTerm::Sampled { n_pairs: 200_000, seed: RngState::new(1) }).unwrap();
        assert!((sampled - oracle).abs() / oracle < 0.05, "{sampled} vs {oracle}");
    }

    #[test]
    fn cross_entropy_zero_when_matched() {
        let p = CurveParams::student_t();
        let y = EmbeddingCoords::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        // nu = 1 / (1 + 1) = 0.5
        let g = FuzzyGraph::from_edges(2, vec![(0, 1, 0.5)]).unwrap();
        assert!(cross_entropy(&g, &y, p, NonEdgeTerm::Exact).unwrap().abs() < 1e-15);
    }
}
