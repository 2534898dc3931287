//! The end-to-end embedding: kNN graph, fuzzy graph, initialization, SGD.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Metric};
use crate::embedding::EmbeddingCoords;
use crate::error::{invalid, Result};
use crate::fuzzy::{build_fuzzy_graph, FuzzyGraph, KnnOptions};
use crate::knn::{NeighborGraph, NnDescentParams};
use crate::layout::{cross_entropy, default_n_epochs, fit_phi, optimize_embedding, CurveParams, NonEdgeTerm, OptimizerConfig};
use crate::rng::RngState;
use crate::spectral::{random_embedding, spectral_embedding, SpectralParams};

/// How starting coordinates are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Spectral,
    Random,
}

impl std::str::FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown init mode '{other}' (expected spectral or random)")),
        }
    }
}

/// Every knob of one embedding run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmapConfig {
    pub metric: Metric,
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub spread: f64,
    /// `None` picks 500 epochs up to 10,000 points and 200 beyond.
    pub n_epochs: Option<usize>,
    pub n_neg_samples: usize,
    pub initial_alpha: f64,
    pub repulsion_eps: f64,
    pub grad_clip: f64,
    pub move_other: bool,
    pub init: InitMode,
    pub exact_knn_threshold: usize,
    pub nn_descent_max_iters: usize,
    pub nn_descent_delta: f64,
    /// Fixed curve parameters; `None` fits them to `min_dist` and `spread`.
    pub curve: Option<CurveParams>,
    /// Pairs sampled for the non-edge part of the reported cross entropy.
    pub diagnostic_pairs: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let knn = KnnOptions::default();
        Self {
            metric: Metric::Euclidean,
            n_neighbors: 15,
            n_components: 2,
            min_dist: opt.min_dist,
            spread: opt.spread,
            n_epochs: None,
            n_neg_samples: opt.n_neg_samples,
            initial_alpha: opt.initial_alpha,
            repulsion_eps: opt.repulsion_eps,
            grad_clip: opt.grad_clip,
            move_other: opt.move_other,
            init: InitMode::Spectral,
            exact_knn_threshold: knn.exact_threshold,
            nn_descent_max_iters: knn.descent.max_iters,
            nn_descent_delta: knn.descent.delta,
            curve: None,
            diagnostic_pairs: 100_000,
            seed: 0,
        }
    }
}

impl UmapConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn optimizer(&self, n_samples: usize) -> OptimizerConfig {
        OptimizerConfig {
            min_dist: self.min_dist,
            spread: self.spread,
            n_epochs: self.n_epochs.unwrap_or_else(|| default_n_epochs(n_samples)),
            n_neg_samples: self.n_neg_samples,
            initial_alpha: self.initial_alpha,
            repulsion_eps: self.repulsion_eps,
            grad_clip: self.grad_clip,
            move_other: self.move_other,
        }
    }

    pub fn knn_options(&self) -> KnnOptions {
        KnnOptions {
            exact_threshold: self.exact_knn_threshold,
            descent: NnDescentParams {
                max_iters: self.nn_descent_max_iters,
                delta: self.nn_descent_delta,
            },
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(invalid("n_neighbors", format!("must be at least 2, got {}", self.n_neighbors)));
        }
        if self.n_components == 0 {
            return Err(invalid("n_components", "must be at least 1"));
        }
        if !(self.nn_descent_delta > 0.0 && self.nn_descent_delta < 1.0) {
            return Err(invalid(
                "nn_descent_delta",
                format!("must lie in (0, 1), got {}", self.nn_descent_delta),
            ));
        }
        if self.nn_descent_max_iters == 0 {
            return Err(invalid("nn_descent_max_iters", "must be at least 1"));
        }
        if let Some(c) = self.curve {
            CurveParams::new(c.a, c.b)?;
        }
        self.optimizer(1).validate()
    }

    /// Neighbors actually used on `n` points: at most `n - 1`.
    pub fn effective_n_neighbors(&self, n: usize) -> usize {
        self.n_neighbors.min(n.saturating_sub(1))
    }

    /// Checks the config against a dataset of `n` points.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.effective_n_neighbors(n) < 2 {
            return Err(invalid("n_samples", format!("need at least 3 samples, got {n}")));
        }
        if self.n_components + 1 > n {
            return Err(invalid(
                "n_components",
                format!("needs at least n_components + 1 = {} samples, got {n}", self.n_components + 1),
            ));
        }
        Ok(())
    }
}

/// Wall-clock seconds spent in each stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub knn_graph: f64,
    pub curve_fit: f64,
    pub init: f64,
    pub optimize: f64,
    pub diagnostics: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.knn_graph + self.curve_fit + self.init + self.optimize + self.diagnostics
    }
}

#[derive(Debug, Clone)]
pub struct EmbedResult {
    pub coords: EmbeddingCoords,
    pub initial: EmbeddingCoords,
    pub knn: NeighborGraph,
    pub graph: FuzzyGraph,
    pub curve: CurveParams,
    pub n_epochs: usize,
    /// `n_neighbors` capped at `n - 1`.
    pub n_neighbors: usize,
    pub used_exact_knn: bool,
    /// Points whose bandwidth hit the lower bound.
    pub sigma_clamped: usize,
    pub graph_components: usize,
    /// The spectral solver failed and random coordinates were used.
    pub spectral_fallback: bool,
    pub initial_cross_entropy: f64,
    pub final_cross_entropy: f64,
    pub timings: StageTimings,
}

/// Embeds `data` into `cfg.n_components` dimensions.
pub fn umap_embed(data: &DataMatrix, cfg: &UmapConfig) -> Result<EmbedResult> {
    let n = data.n_samples();
    cfg.validate_for(n)?;
    let rng = RngState::new(cfg.seed);
    let mut timings = StageTimings::default();
    let k = cfg.effective_n_neighbors(n);

    let t = Instant::now();
    let build = build_fuzzy_graph(data, cfg.metric, k, &rng, &cfg.knn_options())?;
    timings.knn_graph = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let curve = match cfg.curve {
        Some(c) => c,
        None => fit_phi(cfg.min_dist, cfg.spread)?,
    };
    timings.curve_fit = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let scale = SpectralParams::default().scale;
    let (initial, graph_components, spectral_fallback) = match cfg.init {
        InitMode::Spectral => {
            let s = spectral_embedding(&build.graph, cfg.n_components, &rng, &SpectralParams::default())?;
            (s.coords, s.n_components, s.fallback)
        }
        InitMode::Random => {
            let comps = crate::spectral::connected_components(&build.graph).len();
            (random_embedding(n, cfg.n_components, &rng, scale), comps, false)
        }
    };
    timings.init = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let opt = cfg.optimizer(n);
    let coords = optimize_embedding(&build.graph, &initial, &opt, curve, &rng)?;
    timings.optimize = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let non_edges = NonEdgeTerm::Sampled {
        n_pairs: cfg.diagnostic_pairs,
        seed: rng,
    };
    let initial_cross_entropy = cross_entropy(&build.graph, &initial, curve, non_edges)?;
    let final_cross_entropy = cross_entropy(&build.graph, &coords, curve, non_edges)?;
    timings.diagnostics = t.elapsed().as_secs_f64();

    Ok(EmbedResult {
        coords,
        initial,
        sigma_clamped: build.directed.n_clamped(),
        knn: build.knn,
        graph: build.graph,
        curve,
        n_epochs: opt.n_epochs,
        n_neighbors: k,
        used_exact_knn: build.used_exact_knn,
        graph_components,
        spectral_fallback,
        initial_cross_entropy,
        final_cross_entropy,
        timings,
    })
}
