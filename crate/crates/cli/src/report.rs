//! The JSON run report.

use serde::{Deserialize, Serialize};
use umap_core::{CurveParams, DataMatrix, EmbedResult, FuzzyGraph, StabilityRow, StageTimings};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;
const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputStats {
    pub n_samples: usize,
    pub n_features: usize,
    pub sparse: bool,
}

impl InputStats {
    pub fn of(data: &DataMatrix) -> Self {
        Self {
            n_samples: data.n_samples(),
            n_features: data.n_features(),
            sparse: data.is_sparse(),
        }
    }
}

/// Edge weights counted in equal-width bins over (0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub n_components: usize,
    pub used_exact_knn: bool,
    pub weight_histogram: WeightHistogram,
}

pub fn weight_histogram(graph: &FuzzyGraph) -> WeightHistogram {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &(_, _, w) in graph.edges() {
        let bin = ((w * HISTOGRAM_BINS as f64).ceil() as usize).clamp(1, HISTOGRAM_BINS) - 1;
        counts[bin] += 1;
    }
    WeightHistogram {
        bin_edges: (0..=HISTOGRAM_BINS).map(|k| k as f64 / HISTOGRAM_BINS as f64).collect(),
        counts,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossEntropy {
    /// Sampled estimate at the initial coordinates.
    pub initial: f64,
    /// Sampled estimate at the final coordinates.
    pub r#final: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedSummary {
    /// Neighbors used, after capping at the sample count minus one.
    pub n_neighbors: usize,
    pub graph: GraphStats,
    pub sigma_clamped: usize,
    pub spectral_fallback: bool,
    pub curve: CurveParams,
    pub n_epochs: usize,
    pub cross_entropy: CrossEntropy,
    pub timings: StageTimings,
    pub total_seconds: f64,
}

impl EmbedSummary {
    pub fn of(result: &EmbedResult) -> Self {
        Self {
            n_neighbors: result.n_neighbors,
            graph: GraphStats {
                n_vertices: result.graph.n_vertices(),
                n_edges: result.graph.n_edges(),
                n_components: result.graph_components,
                used_exact_knn: result.used_exact_knn,
                weight_histogram: weight_histogram(&result.graph),
            },
            sigma_clamped: result.sigma_clamped,
            spectral_fallback: result.spectral_fallback,
            curve: result.curve,
            n_epochs: result.n_epochs,
            cross_entropy: CrossEntropy {
                initial: result.initial_cross_entropy,
                r#final: result.final_cross_entropy,
            },
            timings: result.timings.clone(),
            total_seconds: result.timings.total(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub fractions: Vec<f64>,
    pub trials: usize,
    pub subsample_seed: u64,
    /// How each embedding is scaled before alignment.
    pub normalization: String,
    pub rows: Vec<StabilityRow>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub tool: ToolInfo,
    pub seed: u64,
    pub config: RunConfig,
    pub input: InputStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed: Option<EmbedSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySummary>,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig, data: &DataMatrix) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            tool: ToolInfo::current(),
            seed: config.umap.seed,
            config: config.clone(),
            input: InputStats::of(data),
            embed: None,
            stability: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        let g = FuzzyGraph::from_edges(4, vec![(0, 1, 1.0), (0, 2, 0.05), (1, 2, 0.1), (2, 3, 0.55)]).unwrap();
        let h = weight_histogram(&g);
        assert_eq!(h.counts, vec![2, 0, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert_eq!(h.bin_edges.len(), 11);
    }
}
