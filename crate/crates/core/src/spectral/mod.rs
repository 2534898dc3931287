//! Spectral initialization from the symmetric normalized Laplacian.

mod lanczos;

pub use lanczos::{largest_eigenpairs, Eigenpairs, LanczosParams, NotConverged};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingCoords;
use crate::error::{invalid, Result};
use crate::fuzzy::FuzzyGraph;
use crate::rng::{RngState, StageRng, Stream};

/// Degree substituted for isolated vertices before normalizing.
pub const ISOLATED_DEGREE: f64 = 1e-12;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n_rows) {
            let mut acc = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *out = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[p])] += self.values[p];
            }
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        match self.indices[s..e].binary_search(&c) {
            Ok(p) => self.values[s + p],
            Err(_) => 0.0,
        }
    }
}

fn safe_degrees(graph: &FuzzyGraph) -> Vec<f64> {
    graph
        .degrees()
        .into_iter()
        .map(|d| if d > 0.0 { d } else { ISOLATED_DEGREE })
        .collect()
}

/// `L = I - D^{-1/2} A D^{-1/2}` as a CSR matrix with explicit diagonal.
pub fn normalized_laplacian(graph: &FuzzyGraph) -> CsrMatrix {
    let n = graph.n_vertices();
    let inv_sqrt: Vec<f64> = safe_degrees(graph).iter().map(|d| 1.0 / d.sqrt()).collect();
    let adj = graph.adjacency();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for (i, row) in adj.iter().enumerate() {
        let mut diag_done = false;
        for &(j, w) in row {
            if !diag_done && j > i {
                indices.push(i);
                values.push(1.0);
                diag_done = true;
            }
            indices.push(j);
            values.push(-w * (inv_sqrt[i] * inv_sqrt[j]));
        }
        if !diag_done {
            indices.push(i);
            values.push(1.0);
        }
        indptr.push(indices.len());
    }
    CsrMatrix {
        n_rows: n,
        n_cols: n,
        indptr,
        indices,
        values,
    }
}

/// Connected components, each sorted ascending, ordered by smallest member.
pub fn connected_components(graph: &FuzzyGraph) -> Vec<Vec<usize>> {
    let n = graph.n_vertices();
    let adj = graph.adjacency();
    let mut label = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![s];
        label[s] = id;
        let mut head = 0;
        while head < members.len() {
            let v = members[head];
            head += 1;
            for &(u, _) in &adj[v] {
                if label[u] == usize::MAX {
                    label[u] = id;
                    members.push(u);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    /// Final coordinates are scaled so the largest magnitude equals this.
    pub scale: f64,
    /// Components larger than this use the iterative solver.
    pub dense_limit: usize,
    pub tol: f64,
    /// Spacing of the grid that separates disconnected components.
    pub component_spacing: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self {
            scale: 10.0,
            dense_limit: 512,
            tol: 1e-8,
            component_spacing: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub coords: EmbeddingCoords,
    pub n_components: usize,
    /// Set when the eigensolver failed and coordinates are random.
    pub fallback: bool,
}

/// Columns are eigenvectors of the `d` smallest non-trivial eigenvalues of
/// one connected component's Laplacian.
fn component_eigenvectors(
    graph: &FuzzyGraph,
    d: usize,
    params: &SpectralParams,
    rng: &mut StageRng,
) -> Option<Vec<Vec<f64>>> {
    let n = graph.n_vertices();
    let lap = normalized_laplacian(graph);
    let mut vecs = if n <= params.dense_limit {
        let eig = SymmetricEigen::new(lap.to_dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        order[1..=d]
            .iter()
            .map(|&c| eig.eigenvectors.column(c).iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    } else {
        // smallest of L = largest of 2I - L, with the trivial D^{1/2} 1 removed
        let deg = safe_degrees(graph);
        let mut trivial: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
        let nt = trivial.iter().map(|x| x * x).sum::<f64>().sqrt();
        trivial.iter_mut().for_each(|x| *x /= nt);
        let lanczos = LanczosParams {
            tol: params.tol,
            max_matvecs: 5 * n,
            basis: (4 * d + 16).max(32),
        };
        let res = largest_eigenpairs(
            n,
            d,
            |x, y| {
                lap.matvec(x, y);
                for (yi, xi) in y.iter_mut().zip(x) {
                    *yi = 2.0 * xi - *yi;
                }
            },
            &[trivial],
            lanczos,
            rng,
        )
        .ok()?;
        res.vectors
    };
    for v in vecs.iter_mut() {
        normalize_sign(v);
    }
    Some(vecs)
}

/// Flips `v` so its largest-magnitude entry is positive.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best.abs() + 1e-12 {
            best = x;
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Spectral layout with per-component handling, scaled so the largest
/// absolute coordinate equals `params.scale`.
pub fn spectral_embedding(
    graph: &FuzzyGraph,
    d: usize,
    rng: &RngState,
    params: &SpectralParams,
) -> Result<SpectralResult> {
    let n = graph.n_vertices();
    if d == 0 {
        return Err(invalid("n_components", "must be at least 1"));
    }
    if d + 1 > n {
        return Err(invalid(
            "n_components",
            format!("need d + 1 <= n, got d = {d} with n = {n}"),
        ));
    }
    let mut stream = rng.stream(Stream::SpectralInit);
    let comps = connected_components(graph);
    let n_comp = comps.len();
    let mut coords = EmbeddingCoords::zeros(n, d);

    // per-component layouts in a unit box
    let mut fallback = false;
    let mut boxes: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_comp);
    for members in &comps {
        let size = members.len();
        let local: Vec<Vec<f64>> = if size >= 2 * d && size > d {
            let sub = if n_comp == 1 { graph.clone() } else { graph.induced(members) };
            match component_eigenvectors(&sub, d, params, &mut stream) {
                Some(cols) => {
                    let max = cols.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
                    (0..size)
                        .map(|r| cols.iter().map(|c| if max > 0.0 { c[r] / max } else { 0.0 }).collect())
                        .collect()
                }
                None => {
                    fallback = true;
                    break;
                }
            }
        } else {
            (0..size)
                .map(|_| (0..d).map(|_| stream.random_range(-1.0..1.0)).collect())
                .collect()
        };
        boxes.push(local);
    }

    if fallback {
        let mut stream = rng.stream(Stream::SpectralInit);
        for v in coords.as_mut_slice() {
            *v = stream.random_range(-params.scale..params.scale);
        }
        return Ok(SpectralResult {
            coords,
            n_components: n_comp,
            fallback: true,
        });
    }

    let half = if n_comp == 1 { 1.0 } else { 0.4 * params.component_spacing };
    let cols = if d >= 2 {
        (n_comp as f64).sqrt().ceil() as usize
    } else {
        n_comp
    };
    let rows = n_comp.div_ceil(cols);
    for (c, (members, local)) in comps.iter().zip(&boxes).enumerate() {
        let mut offset = vec![0.0; d];
        if n_comp > 1 {
            let (gx, gy) = (c % cols, c / cols);
            offset[0] = (gx as f64 - (cols - 1) as f64 / 2.0) * params.component_spacing;
            if d >= 2 {
                offset[1] = (gy as f64 - (rows - 1) as f64 / 2.0) * params.component_spacing;
            }
        }
        for (&v, p) in members.iter().zip(local) {
            let row = coords.row_mut(v);
            for k in 0..d {
                row[k] = offset[k] + half * p[k];
            }
        }
    }
    let max = coords.max_abs();
    if max > 0.0 {
        let s = params.scale / max;
        coords.as_mut_slice().iter_mut().for_each(|x| *x *= s);
    }
    Ok(SpectralResult {
        coords,
        n_components: n_comp,
        fallback: false,
    })
}

/// Uniform coordinates in `[-scale, scale]^d`.
pub fn random_embedding(n: usize, d: usize, rng: &RngState, scale: f64) -> EmbeddingCoords {
    let mut stream = rng.stream(Stream::SpectralInit);
    let mut coords = EmbeddingCoords::zeros(n, d);
    for v in coords.as_mut_slice() {
        *v = stream.random_range(-scale..scale);
    }
    coords
}
