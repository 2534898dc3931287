//! Thick-restart Lanczos for the largest eigenpairs of a symmetric operator.
//!
//! The Krylov basis is kept fully orthogonal (two Gram-Schmidt passes per
//! step), so the projected matrix is formed directly from the computed
//! inner products and restarting simply keeps the best Ritz vectors plus
//! the current residual direction.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::rng::StageRng;

#[derive(Debug, Clone, Copy)]
pub struct LanczosParams {
    /// Absolute residual bound `|A y - theta y|` for every wanted pair.
    pub tol: f64,
    pub max_matvecs: usize,
    /// Krylov basis size before a restart.
    pub basis: usize,
}

#[derive(Debug, Clone)]
pub struct Eigenpairs {
    /// Descending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub matvecs: usize,
}

#[derive(Debug, Clone)]
pub struct NotConverged {
    pub matvecs: usize,
    pub worst_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the components of `w` along `deflate` and along `basis`;
/// returns the coefficients against `basis`.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>], deflate: &[Vec<f64>]) -> Vec<f64> {
    let mut coef = vec![0.0; basis.len()];
    for _pass in 0..2 {
        for u in deflate {
            let c = dot(u, w);
            axpy(-c, u, w);
        }
        for (k, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            axpy(-c, v, w);
            coef[k] += c;
        }
    }
    coef
}

fn random_unit(n: usize, basis: &[Vec<f64>], deflate: &[Vec<f64>], rng: &mut StageRng) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, basis, deflate);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// `nev` largest eigenpairs of the operator `apply` restricted to the
/// orthogonal complement of the orthonormal vectors in `deflate`.
pub fn largest_eigenpairs(
    n: usize,
    nev: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    deflate: &[Vec<f64>],
    params: LanczosParams,
    rng: &mut StageRng,
) -> Result<Eigenpairs, NotConverged> {
    let space = n - deflate.len();
    assert!(nev >= 1 && nev <= space, "nev out of range");
    let m = params.basis.max(2 * nev + 2).min(space);
    let keep = (nev + (m - nev) / 2).min(m - 1).max(nev);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut matvecs = 0;
    let mut start = match random_unit(n, &[], deflate, rng) {
        Some(v) => v,
        None => {
            return Err(NotConverged {
                matvecs,
                worst_residual: f64::INFINITY,
            })
        }
    };
    let mut w = vec![0.0; n];

    loop {
        basis.push(start);
        let mut beta = 0.0;
        let mut residual = vec![0.0; n];
        while basis.len() <= m {
            let j = basis.len() - 1;
            apply(&basis[j], &mut w);
            matvecs += 1;
            let coef = orthogonalize(&mut w, &basis, deflate);
            for (i, c) in coef.iter().enumerate() {
                h[(i, j)] = *c;
                h[(j, i)] = *c;
            }
            beta = norm(&w);
            if j + 1 == m {
                residual.copy_from_slice(&w);
                break;
            }
            if beta > 1e-12 {
                basis.push(w.iter().map(|x| x / beta).collect());
            } else {
                // invariant subspace found; continue with a fresh direction
                beta = 0.0;
                match random_unit(n, &basis, deflate, rng) {
                    Some(v) => basis.push(v),
                    None => {
                        residual.iter_mut().for_each(|x| *x = 0.0);
                        break;
                    }
                }
            }
        }
        let size = basis.len();
        let hs = h.view((0, 0), (size, size)).into_owned();
        let eig = SymmetricEigen::new(hs);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let coupling = |col: usize| beta * eig.eigenvectors[(size - 1, col)];
        let worst = order[..nev]
            .iter()
            .map(|&c| coupling(c).abs())
            .fold(0.0, f64::max);
        let ritz = |col: usize| {
            let mut y = vec![0.0; n];
            for (k, v) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(k, col)], v, &mut y);
            }
            y
        };

        if worst <= params.tol || size < m {
            let vectors: Vec<Vec<f64>> = order[..nev].iter().map(|&c| ritz(c)).collect();
            return Ok(Eigenpairs {
                values: order[..nev].iter().map(|&c| eig.eigenvalues[c]).collect(),
                vectors,
                matvecs,
            });
        }
        if matvecs >= params.max_matvecs {
            return Err(NotConverged {
                matvecs,
                worst_residual: worst,
            });
        }

        let kept: Vec<Vec<f64>> = order[..keep].iter().map(|&c| ritz(c)).collect();
        h.fill(0.0);
        for (i, &c) in order[..keep].iter().enumerate() {
            h[(i, i)] = eig.eigenvalues[c];
        }
        basis = kept;
        start = if beta > 1e-12 {
            residual.iter().map(|x| x / beta).collect()
        } else {
            match random_unit(n, &basis, deflate, rng) {
                Some(v) => v,
                None => {
                    return Err(NotConverged {
                        matvecs,
                        worst_residual: worst,
                    })
                }
            }
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngState, Stream};

    #[test]
    fn diagonal_operator() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64) / n as f64).collect();
        let mut rng = RngState::new(1).stream(Stream::Custom(9));
        let res = largest_eigenpairs(
            n,
            3,
            |x, y| {
                for i in 0..n {
                    y[i] = diag[i] * x[i];
                }
            },
            &[],
            LanczosParams {
                tol: 1e-10,
                max_matvecs: 20_000,
                basis: 30,
            },
            &mut rng,
        )
        .unwrap();
        for (k, v) in res.values.iter().enumerate() {
            let expect = (n - 1 - k) as f64 / n as f64;
            assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
        }
        // eigenvector of the largest is e_{n-1}
        assert!((res.vectors[0][n - 1].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deflation_skips_vector() {
        let n = 200;
        let diag: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0;
        let mut rng = RngState::new(2).stream(Stream::Custom(9));
        let res = largest_eigenpairs(
            n,
            2,
            |x, y| {
                for i in 0..n {
                    y[i] = diag[i] * x[i];
                }
            },
            &[e],
            LanczosParams {
                tol: 1e-8,
                max_matvecs: 20_000,
                basis: 20,
            },
            &mut rng,
        )
        .unwrap();
        assert!((res.values[0] - (n - 2) as f64).abs() < 1e-7);
        assert!((res.values[1] - (n - 3) as f64).abs() < 1e-7);
    }
}
