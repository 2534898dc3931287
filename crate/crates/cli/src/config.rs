//! Run configuration: defaults, an optional JSON file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use umap_core::{CurveParams, InitMode, MatrixFormat, Metric, UmapConfig};

/// Encoding of a graph dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFormat {
    /// Header line "n_vertices n_edges", then one "i j w" line per edge.
    #[default]
    Text,
    /// Little-endian u64 n_vertices, u64 n_edges, then (u64 i, u64 j, f64 w) per edge.
    Binary,
}

/// Everything needed to reproduce a run, apart from the input file itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub input_format: MatrixFormat,
    pub output: Option<PathBuf>,
    pub output_format: MatrixFormat,
    pub graph: Option<PathBuf>,
    pub graph_format: GraphFormat,
    pub report: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub umap: UmapConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by every command that reads data and builds a graph.
/// Unset flags fall back to the config file, then to the defaults shown.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration (a report's "config" object works as-is)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Input matrix, one sample per row
    #[arg(long, short = 'i', value_name = "FILE")]
    pub input: Option<PathBuf>,

    /// Input encoding: delimited, raw-binary-f64 or raw-binary-f32 [default: delimited]
    #[arg(long, value_name = "FORMAT")]
    pub input_format: Option<MatrixFormat>,

    /// Where the main result is written
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,

    /// Output encoding: delimited, raw-binary-f64 or raw-binary-f32 [default: delimited]
    #[arg(long, value_name = "FORMAT")]
    pub output_format: Option<MatrixFormat>,

    /// JSON run report
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Dissimilarity: euclidean, squared-euclidean, manhattan or cosine [default: euclidean]
    #[arg(long)]
    pub metric: Option<Metric>,

    /// Neighbors per point [default: 15]
    #[arg(long)]
    pub n_neighbors: Option<usize>,

    /// Embedding dimension [default: 2]
    #[arg(long)]
    pub n_components: Option<usize>,

    /// Desired separation between close points [default: 0.1]
    #[arg(long)]
    pub min_dist: Option<f64>,

    /// Scale of the membership decay beyond min-dist [default: 1.0]
    #[arg(long)]
    pub spread: Option<f64>,

    /// Optimization epochs [default: 500 for up to 10,000 points, else 200]
    #[arg(long)]
    pub n_epochs: Option<usize>,

    /// Negative samples per sampled edge [default: 5]
    #[arg(long)]
    pub n_neg_samples: Option<usize>,

    /// Initial learning rate, decayed linearly over the epochs [default: 1.0]
    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Added to squared distances in the repulsive gradient [default: 0.001]
    #[arg(long)]
    pub repulsion_eps: Option<f64>,

    /// Per-component gradient bound [default: 4.0]
    #[arg(long)]
    pub grad_clip: Option<f64>,

    /// Also move the far end of each sampled edge [default: true]
    #[arg(long, value_name = "BOOL")]
    pub move_other: Option<bool>,

    /// Initial coordinates: spectral or random [default: spectral]
    #[arg(long)]
    pub init: Option<InitMode>,

    /// Use the exhaustive kNN search up to this many points [default: 4096]
    #[arg(long)]
    pub exact_knn_threshold: Option<usize>,

    /// Nearest-neighbor descent iteration cap [default: 16]
    #[arg(long)]
    pub nn_descent_max_iters: Option<usize>,

    /// Nearest-neighbor descent stops below delta * N * k updates [default: 0.001]
    #[arg(long)]
    pub nn_descent_delta: Option<f64>,

    /// Fixed curve parameter a; requires --curve-b [default: fitted to min-dist and spread]
    #[arg(long, requires = "curve_b")]
    pub curve_a: Option<f64>,

    /// Fixed curve parameter b; requires --curve-a [default: fitted to min-dist and spread]
    #[arg(long, requires = "curve_a")]
    pub curve_b: Option<f64>,

    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

macro_rules! apply {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

impl RunArgs {
    /// Defaults, overridden by the config file, overridden by flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        if self.report.is_some() {
            cfg.report = self.report.clone();
        }
        apply!(cfg.input_format, self.input_format);
        apply!(cfg.output_format, self.output_format);
        let u = &mut cfg.umap;
        apply!(u.metric, self.metric);
        apply!(u.n_neighbors, self.n_neighbors);
        apply!(u.n_components, self.n_components);
        apply!(u.min_dist, self.min_dist);
        apply!(u.spread, self.spread);
        if self.n_epochs.is_some() {
            u.n_epochs = self.n_epochs;
        }
        apply!(u.n_neg_samples, self.n_neg_samples);
        apply!(u.initial_alpha, self.learning_rate);
        apply!(u.repulsion_eps, self.repulsion_eps);
        apply!(u.grad_clip, self.grad_clip);
        apply!(u.move_other, self.move_other);
        apply!(u.init, self.init);
        apply!(u.exact_knn_threshold, self.exact_knn_threshold);
        apply!(u.nn_descent_max_iters, self.nn_descent_max_iters);
        apply!(u.nn_descent_delta, self.nn_descent_delta);
        if let (Some(a), Some(b)) = (self.curve_a, self.curve_b) {
            u.curve = Some(CurveParams::new(a, b)?);
        }
        apply!(u.seed, self.seed);
        u.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn require_input(&self) -> Result<&Path> {
        match &self.input {
            Some(p) => Ok(p),
            None => bail!("no input file: pass --input or set \"input\" in the config file"),
        }
    }

    pub fn require_output(&self) -> Result<&Path> {
        match &self.output {
            Some(p) => Ok(p),
            None => bail!("no output file: pass --output or set \"output\" in the config file"),
        }
    }
}
