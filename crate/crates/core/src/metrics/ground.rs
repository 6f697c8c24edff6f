//! Covariate complexity (object masks and part annotations), compactness of
//! the classification machinery, and plain predictive performance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};

use super::change::predicted_class;
use super::space::top_k_prototypes;

pub const DEFAULT_WEIGHT_EPSILON: f64 = 0.001;
pub const DEFAULT_LOCAL_MU: f64 = 0.1;

/// Share of the object covered by the prototype visualization.
pub fn object_overlap(saliency: &Mask, object: &Mask) -> Result<f64> {
    saliency.same_dims(object)?;
    if object.is_empty() {
        return Err(Error::Validation("object mask is empty".into()));
    }
    Ok(saliency.intersection_count(object) as f64 / object.count() as f64)
}

/// Share of the prototype visualization lying on the background.
pub fn background_overlap(saliency: &Mask, object: &Mask) -> Result<f64> {
    saliency.same_dims(object)?;
    if saliency.is_empty() {
        return Err(Error::EmptyMask("saliency mask is empty".into()));
    }
    Ok(1.0 - saliency.intersection_count(object) as f64 / saliency.count() as f64)
}

/// Mean positive activation inside the object minus mean positive activation
/// outside it, after max-normalizing the saliency map. A side without positive
/// activation contributes zero.
pub fn iord(saliency: &Grid, object: &Mask) -> Result<f64> {
    if saliency.dims() != object.dims() {
        return Err(Error::Shape(format!(
            "saliency {:?} and object mask {:?} differ",
            saliency.dims(),
            object.dims()
        )));
    }
    if saliency
        .values()
        .iter()
        .any(|&v| !(v >= 0.0) || !v.is_finite())
    {
        return Err(Error::Validation(
            "saliency must be finite and nonnegative".into(),
        ));
    }
    let max = saliency.max();
    if max == 0.0 {
        return Err(Error::DegenerateSaliency("saliency map is all zero".into()));
    }
    let (mut in_sum, mut in_n, mut out_sum, mut out_n) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &inside) in saliency.values().iter().zip(object.cells()) {
        let x = v / max;
        if x > 0.0 {
            if inside {
                in_sum += x;
                in_n += 1;
            } else {
                out_sum += x;
                out_n += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(mean(in_sum, in_n) - mean(out_sum, out_n))
}

/// Per prototype: in how many images each part fell inside its box.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartHistogram {
    pub counts: BTreeMap<u32, usize>,
    pub image_count: usize,
}

impl PartHistogram {
    /// Records one image in which the prototype covered `parts` (duplicates ignored).
    pub fn record_image(&mut self, parts: impl IntoIterator<Item = u32>) {
        self.image_count += 1;
        let mut seen: Vec<u32> = parts.into_iter().collect();
        seen.sort_unstable();
        seen.dedup();
        for p in seen {
            *self.counts.entry(p).or_insert(0) += 1;
        }
    }
}

/// Mean over the part vocabulary of the fraction of images covering that part.
pub fn consistency(histogram: &PartHistogram, vocabulary: &[u32]) -> Result<f64> {
    if vocabulary.is_empty() {
        return Err(Error::Validation("part vocabulary is empty".into()));
    }
    if histogram.image_count == 0 {
        return Err(Error::Validation("part histogram covers no images".into()));
    }
    if let Some(p) = histogram.counts.keys().find(|p| !vocabulary.contains(p)) {
        return Err(Error::Validation(format!(
            "part {p} is not in the vocabulary"
        )));
    }
    let total: f64 = vocabulary
        .iter()
        .map(|p| {
            histogram.counts.get(p).copied().unwrap_or(0) as f64 / histogram.image_count as f64
        })
        .sum();
    Ok(total / vocabulary.len() as f64)
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Validation(format!(
            "weight threshold {eps} must be positive"
        )));
    }
    Ok(())
}

/// Columns (prototypes) with at least one weight above `eps` in magnitude.
pub fn global_size(weights: &Grid, eps: f64) -> Result<usize> {
    check_epsilon(eps)?;
    Ok((0..weights.cols())
        .filter(|&c| (0..weights.rows()).any(|r| weights.get(r, c).abs() > eps))
        .count())
}

/// Fraction of weights at or below `eps` in magnitude.
pub fn sparsity(weights: &Grid, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    let above = weights.values().iter().filter(|w| w.abs() > eps).count();
    Ok((weights.len() - above) as f64 / weights.len() as f64)
}

/// Negative-to-positive weight-count ratio; `None` when negatives exist but
/// no positive weight does.
pub fn npr(weights: &Grid, eps: f64) -> Result<Option<f64>> {
    check_epsilon(eps)?;
    let pos = weights.values().iter().filter(|&&w| w > eps).count();
    let neg = weights.values().iter().filter(|&&w| w < -eps).count();
    Ok(match (neg, pos) {
        (0, 0) => Some(0.0),
        (_, 0) => None,
        (n, p) => Some(n as f64 / p as f64),
    })
}

/// Number of prototypes whose max-normalized score exceeds `mu`.
pub fn local_size(scores: &[f64], mu: f64) -> Result<usize> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::DegenerateSeries(
            "similarity scores have no positive maximum".into(),
        ));
    }
    Ok(scores.iter().filter(|&&s| s / max > mu).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy: f64,
    /// Absent for multi-label data.
    pub topk_accuracy: Option<f64>,
    pub f1: f64,
}

/// Accuracy, top-`k` accuracy and F1. Single-label data use argmax predictions
/// and macro-F1 over the classes that occur as a label or prediction;
/// multi-label data use subset accuracy and micro-F1 on `logit > threshold`.
pub fn performance(
    outputs: &[Vec<f64>],
    labels: &[Vec<usize>],
    multilabel: bool,
    k: usize,
    threshold: f64,
) -> Result<Performance> {
    if outputs.is_empty() {
        return Err(Error::Validation(
            "performance needs at least one sample".into(),
        ));
    }
    if outputs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} outputs but {} label sets",
            outputs.len(),
            labels.len()
        )));
    }
    let n = outputs.len() as f64;
    if multilabel {
        let (mut exact, mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
        for (out, lab) in outputs.iter().zip(labels) {
            let mut hit = true;
            for (c, &v) in out.iter().enumerate() {
                match (v > threshold, lab.contains(&c)) {
                    (true, true) => tp += 1,
                    (true, false) => {
                        fp += 1;
                        hit = false;
                    }
                    (false, true) => {
                        fneg += 1;
                        hit = false;
                    }
                    (false, false) => {}
                }
            }
            exact += usize::from(hit);
        }
        let denom = 2 * tp + fp + fneg;
        let f1 = if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
        return Ok(Performance {
            accuracy: exact as f64 / n,
            topk_accuracy: None,
            f1,
        });
    }

    let mut correct = 0usize;
    let mut topk = 0usize;
    let mut confusion: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (out, lab) in outputs.iter().zip(labels) {
        let &[truth] = lab.as_slice() else {
            return Err(Error::Validation(format!(
                "single-label evaluation needs exactly one label per sample, got {lab:?}"
            )));
        };
        let pred = predicted_class(out);
        if pred == truth {
            correct += 1;
            confusion.entry(truth).or_default().0 += 1;
        } else {
            confusion.entry(pred).or_default().1 += 1;
            confusion.entry(truth).or_default().2 += 1;
        }
        if top_k_prototypes(out, k).contains(&truth) {
            topk += 1;
        }
    }
    let f1_sum: f64 = confusion
        .values()
        .map(|&(tp, fp, fneg)| 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
        .sum();
    Ok(Performance {
        accuracy: correct as f64 / n,
        topk_accuracy: Some(topk as f64 / n),
        f1: f1_sum / confusion.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(rows: usize, cols: usize, on: &[(usize, usize)]) -> Mask {
        Mask::from_fn(rows, cols, |r, c| on.contains(&(r, c)))
    }

    #[test]
    fn overlap_examples() {
        let m = mask(
            2,
            4,
            &[
                (0, 0),
                (0, 1),
                (0, 2),
                (0, 3),
                (1, 0),
                (1, 1),
                (1, 2),
                (1, 3),
            ],
        );
        let v = mask(2, 4, &[(0, 0), (0, 1)]);
        assert_eq!(object_overlap(&m, &m).unwrap(), 1.0);
        assert_eq!(object_overlap(&v, &m).unwrap(), 0.25);
        assert_eq!(background_overlap(&v, &m).unwrap(), 0.0);
        let small = mask(2, 2, &[(0, 0)]);
        let far = mask(2, 2, &[(1, 1)]);
        assert_eq!(object_overlap(&far, &small).unwrap(), 0.0);
        assert_eq!(background_overlap(&far, &small).unwrap(), 1.0);
        let half = mask(2, 2, &[(0, 0), (0, 1)]);
        assert_eq!(background_overlap(&half, &small).unwrap(), 0.5);
    }

    #[test]
    fn overlap_errors() {
        let empty = mask(2, 2, &[]);
        let one = mask(2, 2, &[(0, 0)]);
        assert!(matches!(
            object_overlap(&one, &empty),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            background_overlap(&empty, &one),
            Err(Error::EmptyMask(_))
        ));
        assert!(object_overlap(&one, &mask(3, 2, &[(0, 0)])).is_err());
    }

    #[test]
    fn iord_examples() {
        let object = mask(1, 4, &[(0, 0), (0, 1)]);
        let s = Grid::from_rows(&[&[1.0, 0.6, 0.2, 0.2]]);
        assert!((iord(&s, &object).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(iord(&Grid::filled(1, 4, 0.3), &object).unwrap(), 0.0);
        let inside_only = Grid::from_rows(&[&[2.0, 1.0, 0.0, 0.0]]);
        assert!((iord(&inside_only, &object).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(
            iord(&Grid::filled(1, 4, 0.0), &object),
            Err(Error::DegenerateSaliency(_))
        ));
    }

    #[test]
    fn consistency_examples() {
        let mut h = PartHistogram::default();
        h.record_image([1, 2]);
        h.record_image([1, 1]);
        assert_eq!(consistency(&h, &[1, 2]).unwrap(), 0.75);
        let mut never = PartHistogram::default();
        never.record_image([]);
        assert_eq!(consistency(&never, &[1, 2]).unwrap(), 0.0);
        let mut always = PartHistogram::default();
        always.record_image([1, 2]);
        always.record_image([2, 1]);
        assert_eq!(consistency(&always, &[1, 2]).unwrap(), 1.0);
        assert!(consistency(&always, &[]).is_err());
        assert!(consistency(&always, &[1]).is_err());
    }

    #[test]
    fn compactness_examples() {
        let w = Grid::from_rows(&[&[1.0, 0.0, 0.5], &[0.2, 0.0, 0.0]]);
        assert_eq!(global_size(&w, 0.001).unwrap(), 2);
        assert_eq!(global_size(&Grid::filled(2, 3, 0.0), 0.001).unwrap(), 0);
        assert_eq!(global_size(&Grid::filled(2, 3, 1.0), 0.001).unwrap(), 3);

        let w = Grid::from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0005, 0.0, -2.0]]);
        assert_eq!(sparsity(&w, 0.001).unwrap(), 0.75);
        assert_eq!(sparsity(&Grid::filled(2, 2, 0.0), 0.001).unwrap(), 1.0);
        assert_eq!(sparsity(&Grid::filled(2, 2, 0.5), 0.001).unwrap(), 0.0);

        assert_eq!(
            npr(&Grid::from_rows(&[&[1.0, -1.0]]), 0.001).unwrap(),
            Some(1.0)
        );
        assert_eq!(
            npr(&Grid::from_rows(&[&[1.0, 0.0]]), 0.001).unwrap(),
            Some(0.0)
        );
        assert_eq!(
            npr(&Grid::from_rows(&[&[0.0, 0.0]]), 0.001).unwrap(),
            Some(0.0)
        );
        assert_eq!(npr(&Grid::from_rows(&[&[-1.0]]), 0.001).unwrap(), None);
        assert!(global_size(&w, 0.0).is_err());
    }

    #[test]
    fn local_size_examples() {
        assert_eq!(local_size(&[1.0, 0.5, 0.05], 0.1).unwrap(), 2);
        assert_eq!(local_size(&[0.3; 4], 0.1).unwrap(), 4);
        assert_eq!(local_size(&[0.3], 0.1).unwrap(), 1);
        assert!(matches!(
            local_size(&[0.0, 0.0], 0.1),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn performance_examples() {
        let outs = vec![vec![2.0, 1.0, 0.0], vec![0.0, 3.0, 1.0]];
        let labs = vec![vec![0], vec![1]];
        let p = performance(&outs, &labs, false, 3, 0.0).unwrap();
        assert_eq!((p.accuracy, p.topk_accuracy, p.f1), (1.0, Some(1.0), 1.0));

        let outs = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let p = performance(&outs, &[vec![0], vec![1]], false, 3, 0.0).unwrap();
        assert_eq!(p.accuracy, 0.5);
        assert!((p.f1 - 1.0 / 3.0).abs() < 1e-15);

        let outs = vec![vec![1.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 5.0, 4.0]];
        let p = performance(&outs, &[vec![0], vec![3]], false, 3, 0.0).unwrap();
        assert_eq!((p.accuracy, p.topk_accuracy), (0.0, Some(1.0)));

        assert!(performance(&[], &[], false, 3, 0.0).is_err());
        assert!(performance(&[vec![1.0]], &[vec![0, 1]], false, 3, 0.0).is_err());
    }

    #[test]
    fn multilabel_performance() {
        let outs = vec![vec![1.0, -1.0, 2.0], vec![-1.0, 0.5, -0.2]];
        let labs = vec![vec![0, 2], vec![1, 2]];
        let p = performance(&outs, &labs, true, 3, 0.0).unwrap();
        assert_eq!(p.accuracy, 0.5);
        assert_eq!(p.topk_accuracy, None);
        // tp = 3, fp = 0, fn = 1
        assert!((p.f1 - 6.0 / 7.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn counting_metrics_match_loops(
            rows in 1usize..6, cols in 1usize..6,
            seed in prop::collection::vec(-1.0f64..1.0, 36),
            eps in 0.001f64..0.5,
        ) {
            let w = Grid::new(rows, cols, seed[..rows * cols].to_vec()).unwrap();
            let mut above = 0;
            let mut cols_used = 0;
            for c in 0..cols {
                let mut any = false;
                for r in 0..rows {
                    if w.get(r, c).abs() > eps {
                        above += 1;
                        any = true;
                    }
                }
                cols_used += usize::from(any);
            }
            let sp = sparsity(&w, eps).unwrap();
            prop_assert_eq!(sp + above as f64 / (rows * cols) as f64, 1.0);
            prop_assert_eq!(global_size(&w, eps).unwrap(), cols_used);
            prop_assert!(global_size(&w, eps).unwrap() >= global_size(&w, eps * 2.0).unwrap());
            let abs = w.map(f64::abs);
            prop_assert_eq!(npr(&abs, eps).unwrap(), Some(0.0));
        }

        #[test]
        fn iord_is_scale_free_and_bounded(
            vals in prop::collection::vec(0.0f64..1.0, 16),
            inside in prop::collection::vec(any::<bool>(), 16),
            scale in 0.1f64..10.0,
        ) {
            prop_assume!(vals.iter().any(|&v| v > 0.0));
            let s = Grid::new(4, 4, vals).unwrap();
            let m = Mask::new(4, 4, inside).unwrap();
            let a = iord(&s, &m).unwrap();
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - iord(&s.map(|v| v * scale), &m).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn local_size_monotone_in_mu(scores in prop::collection::vec(0.0f64..1.0, 1..20), mu in 0.0f64..1.0) {
            prop_assume!(scores.iter().any(|&v| v > 0.0));
            let n = local_size(&scores, mu).unwrap();
            prop_assert!(n <= scores.len());
            prop_assert!(local_size(&scores, mu / 2.0).unwrap() >= n);
        }
    }
}
