//! Embedding quality and stability measures.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Metric};
use crate::embedding::EmbeddingCoords;
use crate::error::{invalid, Error, Result};
use crate::knn::exact_knn;
use crate::pipeline::{umap_embed, UmapConfig};
use crate::rng::{RngState, Stream};

/// Optimal similarity transform mapping `y` onto `x`: `y' = scale * R y + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesResult {
    /// `sqrt(sum_i |x_i - y'_i|^2)` at the optimum.
    pub distance: f64,
    pub rotation: DMatrix<f64>,
    pub scale: f64,
    pub translation: DVector<f64>,
}

fn to_matrix(e: &EmbeddingCoords) -> DMatrix<f64> {
    DMatrix::from_row_slice(e.n_samples(), e.dim(), e.as_slice())
}

fn centered(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = m.row_mean().transpose();
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

fn check_shapes(x: &EmbeddingCoords, y: &EmbeddingCoords) -> Result<()> {
    if x.n_samples() != y.n_samples() || x.dim() != y.dim() {
        return Err(invalid(
            "embeddings",
            format!(
                "shapes differ: {}x{} vs {}x{}",
                x.n_samples(),
                x.dim(),
                y.n_samples(),
                y.dim()
            ),
        ));
    }
    if x.n_samples() < 2 {
        return Err(invalid("embeddings", "need at least 2 points"));
    }
    Ok(())
}

/// Aligns `y` to `x` by translation, uniform scaling and an orthogonal map.
/// With `allow_reflection = false` the map is restricted to rotations.
pub fn procrustes_align(
    x: &EmbeddingCoords,
    y: &EmbeddingCoords,
    allow_reflection: bool,
) -> Result<ProcrustesResult> {
    check_shapes(x, y)?;
    let (xm, ym) = (to_matrix(x), to_matrix(y));
    let (xc, mx) = centered(&xm);
    let (yc, my) = centered(&ym);
    let (xx, yy) = (xc.norm_squared(), yc.norm_squared());
    if xx <= f64::EPSILON * xm.norm_squared().max(1e-300) || xx == 0.0 {
        return Err(Error::Degenerate("target points have zero variance".into()));
    }
    if yy == 0.0 {
        return Err(Error::Degenerate("moved points have zero variance".into()));
    }
    let cross = xc.transpose() * &yc;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut sv = svd.singular_values.clone();
    let mut u_adj = u.clone();
    if !allow_reflection && (u.determinant() * v_t.determinant()) < 0.0 {
        // flip the direction of the smallest singular value
        let (mut imin, mut vmin) = (0, f64::INFINITY);
        for (k, s) in sv.iter().enumerate() {
            if *s < vmin {
                vmin = *s;
                imin = k;
            }
        }
        let mut col = u_adj.column_mut(imin);
        col *= -1.0;
        sv[imin] = -sv[imin];
    }
    let rotation = &u_adj * &v_t;
    let scale = sv.sum() / yy;
    let translation = &mx - (&rotation * &my) * scale;

    let mut sse = 0.0;
    for i in 0..x.n_samples() {
        let yi = DVector::from_column_slice(y.row(i));
        let mapped = (&rotation * yi) * scale + &translation;
        for (k, m) in mapped.iter().enumerate() {
            sse += (x.row(i)[k] - m).powi(2);
        }
    }
    Ok(ProcrustesResult {
        distance: sse.sqrt(),
        rotation,
        scale,
        translation,
    })
}

/// Centers `e` and divides by the mean distance of its points to the centroid.
pub fn normalize_by_mean_norm(e: &EmbeddingCoords) -> Result<EmbeddingCoords> {
    let (c, _) = centered(&to_matrix(e));
    let mean_norm = c.row_iter().map(|r| r.norm()).sum::<f64>() / e.n_samples() as f64;
    if mean_norm == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let mut out = Vec::with_capacity(e.n_samples() * e.dim());
    for r in c.row_iter() {
        out.extend(r.iter().map(|v| v / mean_norm));
    }
    EmbeddingCoords::new(e.n_samples(), e.dim(), out)
}

/// Per-point Procrustes distance between two embeddings, each first
/// centered and scaled by its own mean point norm. Reflections allowed.
pub fn normalized_procrustes(x: &EmbeddingCoords, y: &EmbeddingCoords) -> Result<f64> {
    check_shapes(x, y)?;
    let xn = normalize_by_mean_norm(x)?;
    let yn = normalize_by_mean_norm(y)?;
    if xn == yn {
        // skip the SVD so that identical inputs give exactly zero
        return Ok(0.0);
    }
    let res = procrustes_align(&xn, &yn, true)?;
    Ok(res.distance / x.n_samples() as f64)
}

/// Mean over points of the overlap between their `k` nearest neighbors in
/// the input space and in the embedding (both exact).
pub fn neighbor_preservation(data: &DataMatrix, y: &EmbeddingCoords, metric: Metric, k: usize) -> Result<f64> {
    if data.n_samples() != y.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: data.n_samples(),
            actual: y.n_samples(),
        });
    }
    let high = exact_knn(data, metric, k)?;
    let low_data = DataMatrix::from_dense(y.n_samples(), y.dim(), y.as_slice().to_vec())?;
    let low = exact_knn(&low_data, Metric::Euclidean, k)?;
    Ok(crate::knn::recall(&low, &high))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub fraction: f64,
    pub mean: f64,
    pub stddev: f64,
    /// One normalized Procrustes distance per trial.
    pub distances: Vec<f64>,
}

/// Sorted uniform subsample of `round(fraction * n)` indices.
pub fn subsample_indices(n: usize, fraction: f64, rng: &RngState) -> Vec<usize> {
    let m = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut stream = rng.stream(Stream::Subsampling);
    let mut idx = sample(&mut stream, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// One trial at one fraction: embed the subsample with `cfg` and compare it
/// with the matching rows of `full`.
pub fn stability_trial(
    data: &DataMatrix,
    full: &EmbeddingCoords,
    fraction: f64,
    cfg: &UmapConfig,
    subsample_rng: &RngState,
) -> Result<f64> {
    let idx = subsample_indices(data.n_samples(), fraction, subsample_rng);
    if idx.len() < cfg.n_neighbors + 1 {
        return Err(invalid(
            "fraction",
            format!(
                "subsample of {} points is smaller than n_neighbors + 1 = {}",
                idx.len(),
                cfg.n_neighbors + 1
            ),
        ));
    }
    let sub = data.select_rows(&idx);
    let sub_embedding = umap_embed(&sub, cfg)?.coords;
    normalized_procrustes(&full.select_rows(&idx), &sub_embedding)
}

fn check_fractions(n: usize, fractions: &[f64], cfg: &UmapConfig) -> Result<()> {
    if fractions.is_empty() {
        return Err(invalid("fractions", "need at least one fraction"));
    }
    for (k, &f) in fractions.iter().enumerate() {
        if !(f > 0.0 && f <= 1.0) {
            return Err(invalid("fractions", format!("{f} is outside (0, 1]")));
        }
        if k > 0 && f < fractions[k - 1] {
            return Err(invalid("fractions", "must be sorted ascending"));
        }
        let m = ((f * n as f64).round() as usize).clamp(1, n);
        if m < cfg.n_neighbors + 1 {
            return Err(invalid(
                "fractions",
                format!(
                    "fraction {f} keeps {m} points, fewer than n_neighbors + 1 = {}",
                    cfg.n_neighbors + 1
                ),
            ));
        }
    }
    Ok(())
}

/// For each trial: embed the full data once (seeded per trial), then for
/// every fraction embed a uniform subsample with the same seed and measure
/// its normalized Procrustes distance to the full embedding's rows.
pub fn subsample_stability(
    data: &DataMatrix,
    fractions: &[f64],
    cfg: &UmapConfig,
    trials: usize,
    rng: &RngState,
) -> Result<Vec<StabilityRow>> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    check_fractions(data.n_samples(), fractions, cfg)?;
    let mut per_fraction = vec![Vec::with_capacity(trials); fractions.len()];
    for t in 0..trials {
        let trial_cfg = cfg.with_seed(RngState::new(cfg.seed).child(t as u64).seed());
        let full = umap_embed(data, &trial_cfg)?.coords;
        let trial_rng = rng.child(t as u64);
        for (fi, &f) in fractions.iter().enumerate() {
            let d = stability_trial(data, &full, f, &trial_cfg, &trial_rng.child(fi as u64))?;
            per_fraction[fi].push(d);
        }
    }
    Ok(fractions
        .iter()
        .zip(per_fraction)
        .map(|(&fraction, distances)| {
            let n = distances.len() as f64;
            let mean = distances.iter().sum::<f64>() / n;
            let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
            StabilityRow {
                fraction,
                mean,
                stddev: var.sqrt(),
                distances,
            }
        })
        .collect())
}
