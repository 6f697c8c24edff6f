//! Original-vs-perturbed change metrics (output completeness and continuity).
//!
//! All ratio metrics lie in `[0, 1]` and are exactly zero when nothing changed.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::perturb::{binarize_similarity, BoundingBox};

/// Visualization location change: one minus the IoU of the two activation boxes.
pub fn vlc(a: &BoundingBox, b: &BoundingBox) -> f64 {
    1.0 - a.iou(b)
}

/// Prototype similarity change: relative drop (or rise) of the similarity score.
pub fn psc(score: f64, perturbed: f64) -> Result<f64> {
    if !(score > 0.0) {
        return Err(Error::Validation(format!(
            "similarity change needs a positive original score, got {score}"
        )));
    }
    Ok((score - perturbed).abs() / score)
}

/// `1 - Σmin / Σmax` over two nonnegative curves.
fn min_max_ratio_change(a: &[f64], b: &[f64], what: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{what}: lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        lo += x.min(y);
        hi += x.max(y);
    }
    if hi == 0.0 {
        return Err(Error::DegenerateSaliency(format!(
            "{what}: both inputs are all zero"
        )));
    }
    Ok(1.0 - lo / hi)
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

fn check_nonnegative(g: &Grid, what: &str) -> Result<()> {
    if g.values().iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Validation(format!("{what} must be nonnegative")));
    }
    Ok(())
}

/// Visualization activation change over the descending-sorted relevance curves.
pub fn vac(a: &Grid, b: &Grid) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "saliency maps have {} and {} pixels",
            a.len(),
            b.len()
        )));
    }
    check_nonnegative(a, "saliency")?;
    check_nonnegative(b, "saliency")?;
    min_max_ratio_change(&sorted_desc(a.values()), &sorted_desc(b.values()), "vac")
}

/// Prototype location change: Manhattan distance between the two argmax cells.
pub fn plc(a: &Grid, b: &Grid) -> Result<f64> {
    a.same_dims(b)?;
    Ok(manhattan(a.argmax(), b.argmax()) as f64)
}

pub(crate) fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Prototype activation location change: one minus the IoU of the binarized maps.
pub fn palc(a: &Grid, b: &Grid) -> Result<f64> {
    a.same_dims(b)?;
    Ok(1.0 - binarize_similarity(a).iou(&binarize_similarity(b)))
}

/// Prototype activation change, cell by cell (no sorting, unlike [`vac`]).
pub fn pac(a: &Grid, b: &Grid) -> Result<f64> {
    a.same_dims(b)?;
    check_nonnegative(a, "similarity map")?;
    check_nonnegative(b, "similarity map")?;
    min_max_ratio_change(a.values(), b.values(), "pac")
}

/// 1-based rank of `index` under descending `scores`, lower index first on ties.
pub fn rank_of(scores: &[f64], index: usize) -> usize {
    let s = scores[index];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < index))
        .count()
}

/// Prototype rank change.
pub fn prc(rank: usize, perturbed_rank: usize) -> usize {
    rank.abs_diff(perturbed_rank)
}

/// Classification activation change over nonnegative logits.
pub fn cac(output: &[f64], perturbed: &[f64]) -> Result<f64> {
    if output.len() != perturbed.len() {
        return Err(Error::Shape(format!(
            "outputs have {} and {} logits",
            output.len(),
            perturbed.len()
        )));
    }
    if let Some(v) = output.iter().chain(perturbed).find(|&&v| !(v >= 0.0)) {
        return Err(Error::Validation(format!(
            "classification change needs nonnegative logits, found {v}"
        )));
    }
    min_max_ratio_change(output, perturbed, "cac").map_err(|e| match e {
        Error::DegenerateSaliency(m) => Error::DegenerateOutput(m),
        other => other,
    })
}

/// Index of the largest logit, lowest index on ties.
pub fn predicted_class(output: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in output.iter().enumerate() {
        if v > output[best] {
            best = j;
        }
    }
    best
}

/// Classification rank change of the originally predicted class.
pub fn crc(output: &[f64], perturbed: &[f64]) -> Result<usize> {
    if output.len() != perturbed.len() || output.is_empty() {
        return Err(Error::Shape(format!(
            "outputs have {} and {} logits",
            output.len(),
            perturbed.len()
        )));
    }
    let c = predicted_class(output);
    Ok(rank_of(perturbed, c).abs_diff(rank_of(output, c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Grid {
        Grid::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn vlc_examples() {
        let a = BoundingBox::new(0, 0, 2, 2).unwrap();
        assert_eq!(vlc(&a, &a), 0.0);
        assert_eq!(vlc(&a, &BoundingBox::new(3, 3, 4, 4).unwrap()), 1.0);
        let b = BoundingBox::new(0, 1, 2, 3).unwrap();
        assert!((vlc(&a, &b) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn psc_examples() {
        assert_eq!(psc(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(psc(2.0, 1.0).unwrap(), 0.5);
        assert_eq!(psc(2.0, 0.0).unwrap(), 1.0);
        assert!(psc(0.0, 1.0).is_err());
        assert!(psc(-1.0, 1.0).is_err());
    }

    #[test]
    fn vac_examples() {
        let a = row(&[2.0, 1.0]);
        assert_eq!(vac(&a, &a).unwrap(), 0.0);
        assert!((vac(&a, &row(&[1.0, 1.0])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(vac(&row(&[1.0, 0.0]), &row(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            vac(&row(&[0.0, 0.0]), &row(&[0.0, 0.0])),
            Err(Error::DegenerateSaliency(_))
        ));
    }

    #[test]
    fn plc_examples() {
        let a = Grid::from_fn(3, 4, |r, c| if (r, c) == (0, 0) { 1.0 } else { 0.0 });
        let b = Grid::from_fn(3, 4, |r, c| if (r, c) == (2, 3) { 1.0 } else { 0.0 });
        assert_eq!(plc(&a, &a).unwrap(), 0.0);
        assert_eq!(plc(&a, &b).unwrap(), 5.0);
        assert_eq!(
            plc(&Grid::filled(3, 3, 1.0), &Grid::filled(3, 3, 2.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn palc_examples() {
        let a = Grid::from_rows(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let b = Grid::from_rows(&[&[0.0, 1.0], &[0.0, 1.0]]);
        assert_eq!(palc(&a, &a).unwrap(), 0.0);
        assert!((palc(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let c = Grid::from_rows(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(palc(&a, &c).unwrap(), 1.0);
    }

    #[test]
    fn pac_examples() {
        assert_eq!(pac(&row(&[1.0, 2.0]), &row(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(pac(&row(&[1.0, 1.0]), &row(&[1.0, 0.0])).unwrap(), 0.5);
        assert_eq!(pac(&row(&[1.0, 0.0]), &row(&[0.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(prc(3, 3), 0);
        assert_eq!(prc(1, 4), 3);
        let before = [5.0, 4.0, 1.0];
        let after = [4.0, 5.0, 1.0];
        assert_eq!(prc(rank_of(&before, 0), rank_of(&after, 0)), 1);
        assert_eq!(prc(rank_of(&before, 1), rank_of(&after, 1)), 1);
        assert_eq!(rank_of(&[1.0, 1.0, 1.0], 2), 3);
    }

    #[test]
    fn cac_examples() {
        assert_eq!(cac(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cac(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(cac(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(
            cac(&[-1.0, 0.0], &[0.0, 1.0]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            cac(&[0.0, 0.0], &[0.0, 0.0]),
            Err(Error::DegenerateOutput(_))
        ));
    }

    #[test]
    fn crc_examples() {
        assert_eq!(crc(&[3.0, 2.0, 1.0], &[3.0, 2.0, 1.0]).unwrap(), 0);
        assert_eq!(crc(&[3.0, 2.0, 1.0], &[0.5, 2.0, 1.0]).unwrap(), 2);
        assert_eq!(crc(&[3.0, 2.0, 1.0], &[3.0, 1.0, 2.0]).unwrap(), 0);
    }
}
