//! Uniform manifold approximation and projection: kNN graphs, fuzzy
//! simplicial sets, spectral initialization, sampled SGD layout, and
//! Procrustes-based stability evaluation.

pub mod data;
pub mod datasets;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fuzzy;
pub mod knn;
pub mod layout;
pub mod pipeline;
pub mod rng;
pub mod spectral;

pub use data::{compute_distance, load_matrix, write_matrix, DataMatrix, MatrixFormat, Metric};
pub use embedding::EmbeddingCoords;
pub use error::{Error, Result};
pub use eval::{neighbor_preservation, normalized_procrustes, procrustes_align, subsample_stability, ProcrustesResult, StabilityRow};
pub use fuzzy::{build_fuzzy_graph, fuzzy_union, smooth_knn_dist, symmetrize, DirectedFuzzyGraph, FuzzyGraph, KnnOptions};
pub use knn::{exact_knn, nn_descent, recall, NeighborGraph, NnDescentParams};
pub use layout::{cross_entropy, fit_phi, optimize_embedding, phi, CurveParams, NonEdgeTerm, OptimizerConfig};
pub use pipeline::{umap_embed, EmbedResult, InitMode, StageTimings, UmapConfig};
pub use rng::{RngState, Stream};
pub use spectral::{spectral_embedding, SpectralParams};
