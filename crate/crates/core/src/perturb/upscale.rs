//! Cubic upscaling of similarity maps to input resolution (the reference visualizer).

use crate::error::{shape_err, Result};
use crate::grid::Grid;

const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel.
fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Source taps and weights for every output index along one axis.
/// Uses pixel-centre alignment and replicated edges.
fn taps(src: usize, dst: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let x = (o as f64 + 0.5) * scale - 0.5;
            let base = x.floor();
            let t = x - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let offset = k as f64 - 1.0;
                idx[k] = (base + offset).clamp(0.0, (src - 1) as f64) as usize;
                w[k] = cubic_weight(t - offset);
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic upscaling with negative lobes clamped to zero.
pub fn upscale_similarity(map: &Grid, target_rows: usize, target_cols: usize) -> Result<Grid> {
    let (rows, cols) = map.dims();
    if target_rows < rows || target_cols < cols {
        return Err(shape_err!(
            "upscale target {target_rows}x{target_cols} is smaller than the {rows}x{cols} source"
        ));
    }
    let col_taps = taps(cols, target_cols);
    let row_taps = taps(rows, target_rows);

    let mut horizontal = vec![0.0; rows * target_cols];
    for r in 0..rows {
        for (c, (idx, w)) in col_taps.iter().enumerate() {
            horizontal[r * target_cols + c] = (0..4).map(|k| w[k] * map.get(r, idx[k])).sum();
        }
    }
    Ok(Grid::from_fn(target_rows, target_cols, |r, c| {
        let (idx, w) = &row_taps[r];
        let v: f64 = (0..4)
            .map(|k| w[k] * horizontal[idx[k] * target_cols + c])
            .sum();
        v.max(0.0)
    }))
}
