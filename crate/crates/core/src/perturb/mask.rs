use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};
use crate::grid::{Grid, Mask};

/// Axis-aligned pixel box; `row0`/`col0` inclusive, `row1`/`col1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl BoundingBox {
    pub fn new(row0: usize, col0: usize, row1: usize, col1: usize) -> Result<Self> {
        if row0 >= row1 || col0 >= col1 {
            return Err(validation_err!(
                "degenerate box ({row0},{col0})-({row1},{col1})"
            ));
        }
        Ok(BoundingBox {
            row0,
            col0,
            row1,
            col1,
        })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        BoundingBox {
            row0: 0,
            col0: 0,
            row1: rows,
            col1: cols,
        }
    }

    pub fn area(&self) -> usize {
        (self.row1 - self.row0) * (self.col1 - self.col0)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }

    /// Whether a sub-pixel point `(row, col)` falls inside the box's pixel extent.
    pub fn contains_point(&self, row: f64, col: f64) -> bool {
        row >= self.row0 as f64
            && row < self.row1 as f64
            && col >= self.col0 as f64
            && col < self.col1 as f64
    }

    pub fn fits(&self, rows: usize, cols: usize) -> bool {
        self.row0 < self.row1 && self.col0 < self.col1 && self.row1 <= rows && self.col1 <= cols
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> usize {
        let r0 = self.row0.max(other.row0);
        let r1 = self.row1.min(other.row1);
        let c0 = self.col0.max(other.col0);
        let c1 = self.col1.min(other.col1);
        if r0 >= r1 || c0 >= c1 {
            return 0;
        }
        (r1 - r0) * (c1 - c0)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], pct: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(validation_err!("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(validation_err!("percentile {pct} outside [0, 100]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Cells strictly above the given percentile of the saliency values.
pub fn percentile_mask(saliency: &Grid, pct: f64) -> Result<Mask> {
    if !saliency.values().iter().any(|&v| v > 0.0) {
        return Err(Error::DegenerateSaliency(
            "saliency map has no positive value".into(),
        ));
    }
    let threshold = percentile(saliency.values(), pct)?;
    let mask = Mask::from_grid(saliency, |v| v > threshold);
    if mask.is_empty() {
        return Err(Error::DegenerateSaliency(format!(
            "no value exceeds the {pct}th percentile ({threshold})"
        )));
    }
    Ok(mask)
}

/// The saliency values kept by [`percentile_mask`], zero elsewhere.
pub fn retain_above_percentile(saliency: &Grid, pct: f64) -> Result<Grid> {
    let mask = percentile_mask(saliency, pct)?;
    Ok(Grid::new(
        saliency.rows(),
        saliency.cols(),
        saliency
            .values()
            .iter()
            .zip(mask.cells())
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect(),
    )
    .expect("same dims"))
}

/// Tightest box around the set cells.
pub fn bounding_box(mask: &Mask) -> Result<BoundingBox> {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for r in 0..mask.rows() {
        for c in 0..mask.cols() {
            if mask.get(r, c) {
                bounds = Some(match bounds {
                    None => (r, c, r, c),
                    Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
                });
            }
        }
    }
    let (r0, c0, r1, c1) =
        bounds.ok_or_else(|| Error::EmptyMask("no active cell for a bounding box".into()))?;
    Ok(BoundingBox {
        row0: r0,
        col0: c0,
        row1: r1 + 1,
        col1: c1 + 1,
    })
}

/// Min-max normalizes and keeps cells above one half; a constant map is fully active.
pub fn binarize_similarity(map: &Grid) -> Mask {
    let (lo, hi) = (map.min(), map.max());
    if hi <= lo {
        return Mask::from_grid(map, |_| true);
    }
    let span = hi - lo;
    Mask::from_grid(map, |v| (v - lo) / span > 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentile_linear_interpolation() {
        let vals: Vec<f64> = (1..=16).map(f64::from).collect();
        assert!((percentile(&vals, 95.0).unwrap() - 15.25).abs() < 1e-12);
        let g = Grid::new(4, 4, vals).unwrap();
        let m = percentile_mask(&g, 95.0).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 3));
    }

    #[test]
    fn percentile_zero_drops_the_minimum() {
        let g = Grid::from_rows(&[&[0.5, 2.0], &[1.0, 3.0]]);
        let m = percentile_mask(&g, 0.0).unwrap();
        assert_eq!(m.cells(), &[false, true, true, true]);
    }

    #[test]
    fn constant_saliency_is_degenerate() {
        let g = Grid::filled(3, 3, 0.4);
        assert!(matches!(
            percentile_mask(&g, 95.0),
            Err(Error::DegenerateSaliency(_))
        ));
        assert!(matches!(
            percentile_mask(&Grid::filled(2, 2, 0.0), 95.0),
            Err(Error::DegenerateSaliency(_))
        ));
    }

    #[test]
    fn boxes() {
        let single = Mask::from_fn(5, 5, |r, c| (r, c) == (2, 3));
        assert_eq!(
            bounding_box(&single).unwrap(),
            BoundingBox::new(2, 3, 3, 4).unwrap()
        );
        let two = Mask::from_fn(5, 5, |r, c| (r, c) == (1, 1) || (r, c) == (2, 3));
        assert_eq!(
            bounding_box(&two).unwrap(),
            BoundingBox::new(1, 1, 3, 4).unwrap()
        );
        let full = Mask::from_fn(4, 6, |_, _| true);
        assert_eq!(bounding_box(&full).unwrap(), BoundingBox::full(4, 6));
        let empty = Mask::from_fn(3, 3, |_, _| false);
        assert!(matches!(bounding_box(&empty), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn box_iou() {
        let a = BoundingBox::new(0, 0, 2, 2).unwrap();
        let b = BoundingBox::new(0, 1, 2, 3).unwrap();
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BoundingBox::new(5, 5, 6, 6).unwrap()), 0.0);
    }

    #[test]
    fn binarize() {
        let g = Grid::from_rows(&[&[0.0, 1.0], &[0.4, 0.6]]);
        assert_eq!(binarize_similarity(&g).cells(), &[false, true, false, true]);
        assert!(binarize_similarity(&Grid::filled(2, 2, 3.0))
            .cells()
            .iter()
            .all(|&b| b));
        let binary = Grid::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(
            binarize_similarity(&binary).cells(),
            &[true, false, false, true]
        );
    }

    proptest! {
        #[test]
        fn p95_keeps_few_cells(n in 2usize..200, seed in any::<u64>()) {
            // distinct values in a shuffled order
            let mut vals: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                vals.swap(i, (s >> 33) as usize % (i + 1));
            }
            let g = Grid::new(1, n, vals).unwrap();
            let m = percentile_mask(&g, 95.0).unwrap();
            prop_assert!(m.count() <= (0.05 * n as f64).ceil() as usize + 1);
            prop_assert!(m.count() >= 1);
        }
    }
}
