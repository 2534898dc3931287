//! File writers. Every artifact goes to a temporary file next to its
//! destination and is renamed into place only once complete.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use tempfile::NamedTempFile;
use umap_core::{write_matrix, DataMatrix, EmbeddingCoords, FuzzyGraph, MatrixFormat, NeighborGraph};

use crate::config::GraphFormat;

fn temp_beside(dest: &Path) -> Result<NamedTempFile> {
    let dir = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))
}

fn persist(tmp: NamedTempFile, dest: &Path) -> Result<()> {
    tmp.persist(dest)
        .map_err(|e| e.error)
        .with_context(|| format!("moving output into {}", dest.display()))?;
    Ok(())
}

/// Writes `dest` through `fill`, leaving nothing behind on failure.
pub fn write_atomic(dest: &Path, fill: impl FnOnce(&mut BufWriter<&File>) -> Result<()>) -> Result<()> {
    let tmp = temp_beside(dest)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    persist(tmp, dest)
}

pub fn write_embedding(dest: &Path, coords: &EmbeddingCoords, format: MatrixFormat) -> Result<()> {
    let matrix = DataMatrix::from_dense(coords.n_samples(), coords.dim(), coords.as_slice().to_vec())?;
    let tmp = temp_beside(dest)?;
    write_matrix(tmp.path(), &matrix, format).with_context(|| format!("writing {}", dest.display()))?;
    persist(tmp, dest)
}

pub fn write_graph(dest: &Path, graph: &FuzzyGraph, format: GraphFormat) -> Result<()> {
    write_atomic(dest, |w| {
        match format {
            GraphFormat::Text => {
                writeln!(w, "{} {}", graph.n_vertices(), graph.n_edges())?;
                for &(i, j, wt) in graph.edges() {
                    writeln!(w, "{i} {j} {wt:?}")?;
                }
            }
            GraphFormat::Binary => {
                w.write_all(&(graph.n_vertices() as u64).to_le_bytes())?;
                w.write_all(&(graph.n_edges() as u64).to_le_bytes())?;
                for &(i, j, wt) in graph.edges() {
                    w.write_all(&(i as u64).to_le_bytes())?;
                    w.write_all(&(j as u64).to_le_bytes())?;
                    w.write_all(&wt.to_le_bytes())?;
                }
            }
        }
        Ok(())
    })
}

/// Directed neighbor lists: header "n_points k", then "i j distance" lines.
pub fn write_neighbors(dest: &Path, knn: &NeighborGraph) -> Result<()> {
    write_atomic(dest, |w| {
        writeln!(w, "{} {}", knn.n_points(), knn.k())?;
        for i in 0..knn.n_points() {
            let (idx, dist) = knn.row(i);
            for (j, d) in idx.iter().zip(dist) {
                writeln!(w, "{i} {j} {d:?}")?;
            }
        }
        Ok(())
    })
}

pub fn write_json<T: serde::Serialize>(dest: &Path, value: &T) -> Result<()> {
    write_atomic(dest, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn write_text(dest: &Path, text: &str) -> Result<()> {
    write_atomic(dest, |w| {
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_text_layout() {
        let dir = tempfile::tempdir().unwrap();
        let g = FuzzyGraph::from_edges(3, vec![(2, 0, 0.5), (1, 2, 1.0)]).unwrap();
        let p = dir.path().join("g.txt");
        write_graph(&p, &g, GraphFormat::Text).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "3 2\n0 2 0.5\n1 2 1.0\n");

        let p = dir.path().join("g.bin");
        write_graph(&p, &g, GraphFormat::Binary).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 24);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 0.5);
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        let r = write_atomic(&p, |_| anyhow::bail!("boom"));
        assert!(r.is_err());
        assert!(!p.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
