use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Color ramp from rarely to frequently visited, dark blue to yellow.
/// Unvisited cells are black.
pub const RAMP: [&str; 8] = ["#30123b", "#4145ab", "#4675ed", "#1bd0d5", "#3bf58c", "#a4fc3c", "#f0cb3a", "#fb8022"];

/// Pixel size of one grid cell.
pub const CELL_PX: usize = 12;

/// Visit counts per cell from a list of `(row, col)` positions.
pub fn visit_counts(positions: &[(usize, usize)], width: usize, height: usize) -> Vec<u64> {
    let mut counts = vec![0; width * height];
    for &(r, c) in positions {
        counts[r * width + c] += 1;
    }
    counts
}

/// Ramp index of a nonzero count: `ln(count) / ln(max)` split into eight
/// equal bins. When the maximum is 1 every visited cell gets the top color.
pub fn ramp_index(count: u64, max: u64) -> usize {
    debug_assert!(count >= 1 && count <= max);
    if max <= 1 {
        return RAMP.len() - 1;
    }
    let x = (count as f64).ln() / (max as f64).ln();
    ((x * RAMP.len() as f64) as usize).min(RAMP.len() - 1)
}

/// Renders row-major visit counts as an SVG grid.
pub fn heatmap_svg(counts: &[u64], width: usize, height: usize) -> Result<String> {
    if counts.len() != width * height {
        return Err(Error::Config(format!("{} counts for a {width}x{height} grid", counts.len())));
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::EmptyInput("visit log"));
    }
    let mut svg = String::new();
    let (w, h) = (width * CELL_PX, height * CELL_PX);
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    for (i, &n) in counts.iter().enumerate() {
        let fill = if n == 0 { "#000000" } else { RAMP[ramp_index(n, max)] };
        let (x, y) = ((i % width) * CELL_PX, (i / width) * CELL_PX);
        writeln!(svg, r#"<rect x="{x}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" fill="{fill}"/>"#).unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
