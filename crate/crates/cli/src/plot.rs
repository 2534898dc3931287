//! Static SVG scatter plots of 2-D embeddings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use umap_core::EmbeddingCoords;

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#ad494a",
];

const SIZE: f64 = 800.0;
const MARGIN: f64 = 0.05;
const RADIUS: f64 = 2.5;

/// One label per non-empty line.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading labels {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Checks that the embedding can be drawn with these labels.
pub fn check_plot_inputs(n_points: usize, dim: usize, labels: Option<&[String]>) -> Result<()> {
    if dim != 2 {
        bail!("plotting needs a 2-column embedding, got {dim} columns");
    }
    if let Some(l) = labels {
        if l.len() != n_points {
            bail!("label count ({}) does not match point count ({n_points})", l.len());
        }
    }
    Ok(())
}

/// Renders one circle per point; labels are colored by order of first
/// appearance, cycling through the palette.
pub fn render_svg(coords: &EmbeddingCoords, labels: Option<&[String]>) -> Result<String> {
    check_plot_inputs(coords.n_samples(), coords.dim(), labels)?;
    let n = coords.n_samples();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..n {
        for k in 0..2 {
            lo[k] = lo[k].min(coords.row(i)[k]);
            hi[k] = hi[k].max(coords.row(i)[k]);
        }
    }
    let mut span = [0.0; 2];
    for k in 0..2 {
        span[k] = hi[k] - lo[k];
        if !(span[k] > 0.0) {
            // a single point or a line: center it
            lo[k] -= 0.5;
            span[k] = 1.0;
        }
        lo[k] -= MARGIN * span[k];
        span[k] *= 1.0 + 2.0 * MARGIN;
    }

    let mut classes: Vec<&str> = Vec::new();
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )?;
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    for i in 0..n {
        let color = match labels {
            Some(l) => {
                let idx = match classes.iter().position(|c| *c == l[i]) {
                    Some(p) => p,
                    None => {
                        classes.push(&l[i]);
                        classes.len() - 1
                    }
                };
                PALETTE[idx % PALETTE.len()]
            }
            None => PALETTE[0],
        };
        let x = (coords.row(i)[0] - lo[0]) / span[0] * SIZE;
        // SVG y grows downward
        let y = SIZE - (coords.row(i)[1] - lo[1]) / span[1] * SIZE;
        writeln!(svg, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{RADIUS}" fill="{color}"/>"#)?;
    }
    writeln!(svg, "</svg>")?;
    Ok(svg)
}
