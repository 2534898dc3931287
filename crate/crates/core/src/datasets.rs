//! Seeded synthetic data for tests, benchmarks and demos.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::DataMatrix;
use crate::rng::{RngState, Stream};

/// Isotropic Gaussian clusters. Centers are uniform in
/// `[-center_box, center_box]^dim`; point `i` belongs to cluster
/// `i % n_clusters`. Returns the data and the cluster labels.
pub fn gaussian_blobs(
    n_samples: usize,
    n_clusters: usize,
    dim: usize,
    cluster_std: f64,
    center_box: f64,
    seed: u64,
) -> (DataMatrix, Vec<usize>) {
    assert!(n_clusters >= 1 && dim >= 1, "need at least one cluster and one dimension");
    let mut rng = RngState::new(seed).stream(Stream::Custom(0));
    let centers: Vec<f64> = (0..n_clusters * dim)
        .map(|_| rng.random_range(-center_box..=center_box))
        .collect();
    let noise = Normal::new(0.0, cluster_std).expect("cluster_std must be finite and non-negative");
    let labels: Vec<usize> = (0..n_samples).map(|i| i % n_clusters).collect();
    let mut values = Vec::with_capacity(n_samples * dim);
    for &c in &labels {
        for k in 0..dim {
            values.push(centers[c * dim + k] + noise.sample(&mut rng));
        }
    }
    let data = DataMatrix::from_dense(n_samples, dim, values).expect("finite generated values");
    (data, labels)
}
