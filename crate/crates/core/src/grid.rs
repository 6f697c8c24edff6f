//! Dense 2-D containers shared by the kernel, perturbation and metric code.
//!
//! Everything is row-major and held in `f64`; conversion from the `f32`
//! interchange tensors happens once at load time.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// A row-major `rows × cols` grid of reals (similarity maps, saliency maps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(shape_err!("grid dims must be positive, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return Err(shape_err!(
                "grid {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dims must be positive");
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dims must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    /// Builds a grid from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Grid::new(rows.len(), cols, rows.concat()).expect("valid grid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Location of the maximum; ties resolve to the first cell in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims(&self, other: &Grid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(shape_err!(
                "grid dims differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A binary mask over a pixel or cell grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!(
                "mask {rows}x{cols} needs {} cells, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Mask { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mask { rows, cols, data }
    }

    /// Mask of cells whose value satisfies `pred`.
    pub fn from_grid(grid: &Grid, pred: impl Fn(f64) -> bool) -> Self {
        Mask {
            rows: grid.rows(),
            cols: grid.cols(),
            data: grid.values().iter().map(|&v| pred(v)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cells(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn same_dims(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(shape_err!(
                "mask dims differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            ));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a || **b)
            .count()
    }

    /// Intersection over union; two empty masks count as identical.
    pub fn iou(&self, other: &Mask) -> f64 {
        let union = self.union_count(other);
        if union == 0 {
            return 1.0;
        }
        self.intersection_count(other) as f64 / union as f64
    }
}

/// An RGB image, `height × width × 3`, channel-interleaved, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(shape_err!(
                "image dims must be positive, got {height}x{width}"
            ));
        }
        if data.len() != height * width * Self::CHANNELS {
            return Err(shape_err!(
                "image {height}x{width}x3 needs {} values, got {}",
                height * width * Self::CHANNELS,
                data.len()
            ));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, px: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_row_major_cell() {
        let g = Grid::from_rows(&[&[1.0, 3.0], &[3.0, 0.0]]);
        assert_eq!(g.argmax(), (0, 1));
        assert_eq!(Grid::filled(3, 3, 2.0).argmax(), (0, 0));
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(Grid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Mask::new(2, 2, vec![true; 5]).is_err());
        assert!(Image::new(1, 1, vec![0.0; 2]).is_err());
    }

    #[test]
    fn iou_counts_cells() {
        let a = Mask::new(1, 3, vec![true, true, false]).unwrap();
        let b = Mask::new(1, 3, vec![false, true, true]).unwrap();
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
    }
}
