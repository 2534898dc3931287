//! Input samples, dissimilarity measures and matrix file formats.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Dissimilarity between two feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    SquaredEuclidean,
    Manhattan,
    /// `1 - <x,y> / (|x| |y|)`, and 1 when either vector is zero.
    Cosine,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::SquaredEuclidean => "squared-euclidean",
            Metric::Manhattan => "manhattan",
            Metric::Cosine => "cosine",
        }
    }

    /// Distance between two dense vectors of equal length. No length check.
    #[inline]
    pub fn dense(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Metric::Euclidean => sq_euclidean(x, y).sqrt(),
            Metric::SquaredEuclidean => sq_euclidean(x, y),
            Metric::Manhattan => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
            Metric::Cosine => {
                let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
                for (a, b) in x.iter().zip(y) {
                    dot += a * b;
                    nx += a * a;
                    ny += b * b;
                }
                cosine_from_parts(dot, nx, ny)
            }
        }
    }

    /// Distance between two rows of the same matrix.
    pub fn rows(&self, x: RowView<'_>, y: RowView<'_>) -> f64 {
        match (x, y) {
            (RowView::Dense(a), RowView::Dense(b)) => self.dense(a, b),
            _ => {
                let mut acc = 0.0;
                let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
                for_each_pair(x, y, &mut |a, b| match self {
                    Metric::Euclidean | Metric::SquaredEuclidean => acc += (a - b) * (a - b),
                    Metric::Manhattan => acc += (a - b).abs(),
                    Metric::Cosine => {
                        dot += a * b;
                        nx += a * a;
                        ny += b * b;
                    }
                });
                match self {
                    Metric::Euclidean => acc.sqrt(),
                    Metric::SquaredEuclidean | Metric::Manhattan => acc,
                    Metric::Cosine => cosine_from_parts(dot, nx, ny),
                }
            }
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "squared-euclidean" | "sqeuclidean" => Ok(Metric::SquaredEuclidean),
            "manhattan" | "l1" | "cityblock" => Ok(Metric::Manhattan),
            "cosine" => Ok(Metric::Cosine),
            other => Err(invalid("metric", format!("unknown metric `{other}`"))),
        }
    }
}

#[inline]
fn sq_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn cosine_from_parts(dot: f64, nx: f64, ny: f64) -> f64 {
    if nx == 0.0 || ny == 0.0 {
        return 1.0;
    }
    // rounding can push the ratio just past +-1
    (1.0 - dot / (nx.sqrt() * ny.sqrt())).clamp(0.0, 2.0)
}

/// Calls `f(x_k, y_k)` for every coordinate where either row is non-zero.
fn for_each_pair(x: RowView<'_>, y: RowView<'_>, f: &mut dyn FnMut(f64, f64)) {
    match (x, y) {
        (RowView::Dense(a), RowView::Dense(b)) => a.iter().zip(b).for_each(|(u, v)| f(*u, *v)),
        (RowView::Sparse { indices, values }, RowView::Dense(d)) => {
            let mut it = indices.iter().zip(values).peekable();
            for (k, v) in d.iter().enumerate() {
                match it.peek() {
                    Some((&i, &s)) if i as usize == k => {
                        f(s, *v);
                        it.next();
                    }
                    _ => f(0.0, *v),
                }
            }
        }
        (RowView::Dense(_), RowView::Sparse { .. }) => for_each_pair(y, x, &mut |a, b| f(b, a)),
        (
            RowView::Sparse {
                indices: ia,
                values: va,
            },
            RowView::Sparse {
                indices: ib,
                values: vb,
            },
        ) => {
            let (mut p, mut q) = (0, 0);
            while p < ia.len() || q < ib.len() {
                let a = ia.get(p).copied().unwrap_or(u32::MAX);
                let b = ib.get(q).copied().unwrap_or(u32::MAX);
                if a == b {
                    f(va[p], vb[q]);
                    p += 1;
                    q += 1;
                } else if a < b {
                    f(va[p], 0.0);
                    p += 1;
                } else {
                    f(0.0, vb[q]);
                    q += 1;
                }
            }
        }
    }
}

/// Checked distance between two feature vectors.
pub fn compute_distance(metric: Metric, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(metric.dense(x, y))
}

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy)]
pub enum RowView<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [u32],
        values: &'a [f64],
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    /// CSR layout with strictly increasing column indices per row.
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
    },
}

/// An `n_samples x n_features` matrix of finite values. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_samples: usize,
    n_features: usize,
    storage: Storage,
}

impl DataMatrix {
    /// Builds a dense matrix from row-major values.
    pub fn from_dense(n_samples: usize, n_features: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_samples * n_features {
            return Err(Error::DimensionMismatch {
                expected: n_samples * n_features,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n_features,
                col: pos % n_features,
            });
        }
        Ok(Self {
            n_samples,
            n_features,
            storage: Storage::Dense(values),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for row in rows {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_dense(rows.len(), n_features, values)
    }

    /// Builds a sparse matrix from `(column, value)` lists, one per sample.
    pub fn from_sparse_rows(n_features: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut sorted = row.clone();
            sorted.sort_by_key(|&(c, _)| c);
            for (k, &(c, v)) in sorted.iter().enumerate() {
                if c >= n_features {
                    return Err(invalid(
                        "sparse row",
                        format!("row {r}: column {c} out of range for {n_features} features"),
                    ));
                }
                if k > 0 && sorted[k - 1].0 == c {
                    return Err(invalid("sparse row", format!("row {r}: duplicate column {c}")));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
                indices.push(c as u32);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_samples: rows.len(),
            n_features,
            storage: Storage::Sparse {
                indptr,
                indices,
                values,
            },
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        match &self.storage {
            Storage::Dense(v) => RowView::Dense(&v[i * self.n_features..(i + 1) * self.n_features]),
            Storage::Sparse {
                indptr,
                indices,
                values,
            } => {
                let (s, e) = (indptr[i], indptr[i + 1]);
                RowView::Sparse {
                    indices: &indices[s..e],
                    values: &values[s..e],
                }
            }
        }
    }

    /// Row `i` as a dense vector.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        match self.row(i) {
            RowView::Dense(v) => v.to_vec(),
            RowView::Sparse { indices, values } => {
                let mut out = vec![0.0; self.n_features];
                for (&c, &v) in indices.iter().zip(values) {
                    out[c as usize] = v;
                }
                out
            }
        }
    }

    #[inline]
    pub fn distance(&self, metric: Metric, i: usize, j: usize) -> f64 {
        metric.rows(self.row(i), self.row(j))
    }

    /// The samples at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        match &self.storage {
            Storage::Dense(_) => {
                let mut values = Vec::with_capacity(indices.len() * self.n_features);
                for &i in indices {
                    if let RowView::Dense(r) = self.row(i) {
                        values.extend_from_slice(r);
                    }
                }
                DataMatrix {
                    n_samples: indices.len(),
                    n_features: self.n_features,
                    storage: Storage::Dense(values),
                }
            }
            Storage::Sparse { .. } => {
                let mut indptr = vec![0];
                let mut idx = Vec::new();
                let mut vals = Vec::new();
                for &i in indices {
                    if let RowView::Sparse { indices, values } = self.row(i) {
                        idx.extend_from_slice(indices);
                        vals.extend_from_slice(values);
                    }
                    indptr.push(idx.len());
                }
                DataMatrix {
                    n_samples: indices.len(),
                    n_features: self.n_features,
                    storage: Storage::Sparse {
                        indptr,
                        indices: idx,
                        values: vals,
                    },
                }
            }
        }
    }
}

/// On-disk matrix encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    /// Comma or whitespace separated text, one sample per line, optional header.
    #[default]
    Delimited,
    /// Little-endian: u64 rows, u64 cols, then row-major f64 values.
    BinaryF64,
    /// Same header as [`MatrixFormat::BinaryF64`] with f32 values, promoted on load.
    BinaryF32,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delimited" | "csv" | "text" => Ok(MatrixFormat::Delimited),
            "raw-binary-f64" | "binary-f64" | "binary" | "f64" => Ok(MatrixFormat::BinaryF64),
            "raw-binary-f32" | "binary-f32" | "f32" => Ok(MatrixFormat::BinaryF32),
            other => Err(invalid("format", format!("unknown matrix format `{other}`"))),
        }
    }
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DataMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    match format {
        MatrixFormat::Delimited => {
            let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
                path: path.into(),
                message: format!("not valid UTF-8: {e}"),
            })?;
            parse_delimited(path, &text)
        }
        MatrixFormat::BinaryF64 => parse_binary(path, &bytes, 8),
        MatrixFormat::BinaryF32 => parse_binary(path, &bytes, 4),
    }
}

fn parse_delimited(path: &Path, text: &str) -> Result<DataMatrix> {
    let parse_err = |message: String| Error::Parse {
        path: path.into(),
        message,
    };
    let mut values = Vec::new();
    let mut n_features = None;
    let mut n_rows = 0;
    let mut first = true;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let parsed: Vec<std::result::Result<f64, _>> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        if first {
            first = false;
            if parsed.iter().any(|p| p.is_err()) {
                // header line
                continue;
            }
        }
        match n_features {
            None => n_features = Some(fields.len()),
            Some(n) if n != fields.len() => {
                return Err(parse_err(format!(
                    "line {}: expected {n} columns, found {} (ragged rows)",
                    lineno + 1,
                    fields.len()
                )))
            }
            _ => {}
        }
        for (col, (raw, p)) in fields.iter().zip(parsed).enumerate() {
            let v = p.map_err(|_| {
                parse_err(format!("line {}, column {}: cannot parse `{raw}`", lineno + 1, col + 1))
            })?;
            if !v.is_finite() {
                return Err(parse_err(format!(
                    "line {}, column {}: non-finite value `{raw}`",
                    lineno + 1,
                    col + 1
                )));
            }
            values.push(v);
        }
        n_rows += 1;
    }
    let Some(n_features) = n_features else {
        return Err(Error::NoRows { path: path.into() });
    };
    DataMatrix::from_dense(n_rows, n_features, values)
}

fn parse_binary(path: &Path, bytes: &[u8], width: usize) -> Result<DataMatrix> {
    let parse_err = |message: String| Error::Parse {
        path: path.into(),
        message,
    };
    if bytes.len() < 16 {
        return Err(parse_err("truncated header (need 16 bytes)".into()));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if n == 0 {
        return Err(Error::NoRows { path: path.into() });
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(width))
        .ok_or_else(|| parse_err(format!("header {n}x{d} overflows")))?;
    if bytes.len() - 16 != expected {
        return Err(parse_err(format!(
            "header declares {n}x{d} values ({expected} bytes), payload has {} bytes",
            bytes.len() - 16
        )));
    }
    let payload = &bytes[16..];
    let mut values = Vec::with_capacity(n * d);
    for (k, chunk) in payload.chunks_exact(width).enumerate() {
        let v = if width == 8 {
            f64::from_le_bytes(chunk.try_into().unwrap())
        } else {
            f32::from_le_bytes(chunk.try_into().unwrap()) as f64
        };
        if !v.is_finite() {
            return Err(parse_err(format!(
                "row {}, column {}: non-finite value",
                k / d.max(1) + 1,
                k % d.max(1) + 1
            )));
        }
        values.push(v);
    }
    DataMatrix::from_dense(n, d, values)
}

/// Writes a matrix. Binary output of a loaded binary file is byte-identical.
pub fn write_matrix(path: impl AsRef<Path>, matrix: &DataMatrix, format: MatrixFormat) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    match format {
        MatrixFormat::Delimited => {
            for i in 0..matrix.n_samples() {
                let row = matrix.dense_row(i);
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        MatrixFormat::BinaryF64 | MatrixFormat::BinaryF32 => {
            out.write_all(&(matrix.n_samples() as u64).to_le_bytes())?;
            out.write_all(&(matrix.n_features() as u64).to_le_bytes())?;
            for i in 0..matrix.n_samples() {
                for v in matrix.dense_row(i) {
                    if format == MatrixFormat::BinaryF64 {
                        out.write_all(&v.to_le_bytes())?;
                    } else {
                        out.write_all(&(v as f32).to_le_bytes())?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_eq!(compute_distance(Metric::Euclidean, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(compute_distance(Metric::Cosine, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        // |1-4| + |2-0| + |3-3|
        assert_eq!(
            compute_distance(Metric::Manhattan, &[1.0, 2.0, 3.0], &[4.0, 0.0, 3.0]).unwrap(),
            5.0
        );
        assert_eq!(
            compute_distance(Metric::SquaredEuclidean, &[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            25.0
        );
    }

    #[test]
    fn cosine_zero_vector() {
        assert_eq!(Metric::Cosine.dense(&[0.0, 0.0], &[1.0, 2.0]), 1.0);
        assert_eq!(Metric::Cosine.dense(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = compute_distance(Metric::Euclidean, &[1.0], &[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("expected 1, got 2"), "{err}");
    }

    #[test]
    fn sparse_matches_dense() {
        let dense = DataMatrix::from_rows(&[vec![0.0, 2.0, 0.0, 1.0], vec![3.0, 0.0, 0.0, -1.0]]).unwrap();
        let sparse = DataMatrix::from_sparse_rows(
            4,
            &[vec![(3, 1.0), (1, 2.0)], vec![(0, 3.0), (3, -1.0)]],
        )
        .unwrap();
        for m in [Metric::Euclidean, Metric::SquaredEuclidean, Metric::Manhattan, Metric::Cosine] {
            let a = dense.distance(m, 0, 1);
            let b = sparse.distance(m, 0, 1);
            assert!((a - b).abs() < 1e-12, "{m:?}: {a} vs {b}");
            let mixed = m.rows(dense.row(0), sparse.row(1));
            assert!((a - mixed).abs() < 1e-12);
        }
        assert_eq!(sparse.dense_row(0), vec![0.0, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn sparse_validation() {
        assert!(DataMatrix::from_sparse_rows(2, &[vec![(2, 1.0)]]).is_err());
        assert!(DataMatrix::from_sparse_rows(2, &[vec![(1, 1.0), (1, 2.0)]]).is_err());
        assert!(DataMatrix::from_sparse_rows(2, &[vec![(1, f64::NAN)]]).is_err());
    }

    #[test]
    fn dense_validation() {
        let err = DataMatrix::from_dense(2, 2, vec![1.0, 2.0, f64::INFINITY, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    fn write_tmp(contents: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents).unwrap();
        f
    }

    #[test]
    fn load_csv() {
        let f = write_tmp(b"1,2\n3,4\n5,6");
        let m = load_matrix(f.path(), MatrixFormat::Delimited).unwrap();
        assert_eq!((m.n_samples(), m.n_features()), (3, 2));
        assert_eq!(m.dense_row(2), vec![5.0, 6.0]);
    }

    #[test]
    fn load_whitespace_with_header() {
        let f = write_tmp(b"x y z\n1 2 3\n\n4\t5 6\n");
        let m = load_matrix(f.path(), MatrixFormat::Delimited).unwrap();
        assert_eq!((m.n_samples(), m.n_features()), (2, 3));
        assert_eq!(m.dense_row(1), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn load_errors() {
        let empty = write_tmp(b"");
        let err = load_matrix(empty.path(), MatrixFormat::Delimited).unwrap_err();
        assert!(err.to_string().contains("no rows"), "{err}");

        let nan = write_tmp(b"1,2\n3,nan\n");
        let err = load_matrix(nan.path(), MatrixFormat::Delimited).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2, column 2") && msg.contains("nan"), "{msg}");

        let ragged = write_tmp(b"1,2\n3\n");
        let err = load_matrix(ragged.path(), MatrixFormat::Delimited).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let junk = write_tmp(b"1,2\n3,abc\n");
        let err = load_matrix(junk.path(), MatrixFormat::Delimited).unwrap_err();
        assert!(err.to_string().contains("`abc`"), "{err}");

        let short = write_tmp(&[0u8; 20]);
        assert!(load_matrix(short.path(), MatrixFormat::BinaryF64).is_err());
    }

    #[test]
    fn f32_promoted() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-2.25f32).to_le_bytes());
        let f = write_tmp(&bytes);
        let m = load_matrix(f.path(), MatrixFormat::BinaryF32).unwrap();
        assert_eq!(m.dense_row(0), vec![1.5, -2.25]);
    }

    proptest! {
        #[test]
        fn metric_axioms(
            x in proptest::collection::vec(-100.0f64..100.0, 5),
            y in proptest::collection::vec(-100.0f64..100.0, 5),
        ) {
            for m in [Metric::Euclidean, Metric::SquaredEuclidean, Metric::Manhattan, Metric::Cosine] {
                let dxy = m.dense(&x, &y);
                prop_assert!(dxy >= 0.0);
                prop_assert_eq!(dxy, m.dense(&y, &x));
                if m != Metric::Cosine || x.iter().any(|v| *v != 0.0) {
                    prop_assert!(m.dense(&x, &x).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn binary_round_trip(
            n in 1usize..6,
            d in 1usize..5,
            seed in proptest::collection::vec(-1e6f64..1e6, 30),
        ) {
            let values: Vec<f64> = seed.iter().cycle().take(n * d).copied().collect();
            let mut bytes = Vec::new();
            bytes.extend_from_slice(&(n as u64).to_le_bytes());
            bytes.extend_from_slice(&(d as u64).to_le_bytes());
            for v in &values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let src = write_tmp(&bytes);
            let m = load_matrix(src.path(), MatrixFormat::BinaryF64).unwrap();
            let dst = tempfile::NamedTempFile::new().unwrap();
            write_matrix(dst.path(), &m, MatrixFormat::BinaryF64).unwrap();
            prop_assert_eq!(fs::read(dst.path()).unwrap(), bytes);

            write_matrix(dst.path(), &m, MatrixFormat::Delimited).unwrap();
            let back = load_matrix(dst.path(), MatrixFormat::Delimited).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
