//! Dataset split utilities: stratified hold-out plus cross-validation folds,
//! and a colour-context (non-IID) split driven by background hue statistics.
//!
//! The colour-context split is a heuristic: every parameter lives in
//! [`HsvSplitConfig`] and none of them is normative.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::perturb::rgb_to_hsv;
use crate::perturb::rng::stream_rng;

pub const TEST_FRACTION: f64 = 0.3;
pub const FOLDS: usize = 4;
/// Smallest class that survives the hold-out and the fold split.
pub const MIN_CLASS_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratifiedSplits {
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
}

fn by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    classes
}

fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

/// 70/30 stratified hold-out, then four stratified folds over the remainder.
/// Sample indices refer to positions in `labels`; every list is sorted.
pub fn stratified_splits(labels: &[usize], seed: u64) -> Result<StratifiedSplits> {
    let classes = by_class(labels);
    if classes.len() < 2 {
        return Err(Error::Validation(format!(
            "stratification needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    if let Some((class, members)) = classes.iter().find(|(_, m)| m.len() < MIN_CLASS_SIZE) {
        return Err(Error::Validation(format!(
            "class {class} has {} samples; at least {MIN_CLASS_SIZE} are required",
            members.len()
        )));
    }
    let mut test = Vec::new();
    let mut val: Vec<Vec<usize>> = vec![Vec::new(); FOLDS];
    for (class, members) in &classes {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut stream_rng(seed, &format!("split/stratified/{class}")));
        let t = test_count(shuffled.len(), TEST_FRACTION);
        test.extend_from_slice(&shuffled[..t]);
        let rest = &shuffled[t..];
        // contiguous chunks whose sizes differ by at most one
        let (base, extra) = (rest.len() / FOLDS, rest.len() % FOLDS);
        let mut start = 0;
        for (f, v) in val.iter_mut().enumerate() {
            let len = base + usize::from(f < extra);
            v.extend_from_slice(&rest[start..start + len]);
            start += len;
        }
    }
    test.sort_unstable();
    let folds = (0..FOLDS)
        .map(|f| {
            let mut v = val[f].clone();
            v.sort_unstable();
            let mut train: Vec<usize> = val
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            Fold { train, val: v }
        })
        .collect();
    Ok(StratifiedSplits { test, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsvSplitConfig {
    pub hue_bins: usize,
    pub saturation_bins: usize,
    /// Border frame width as a fraction of each image side.
    pub border: f64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Test share of the random fallback used for degenerate classes.
    pub fallback_test_fraction: f64,
}

impl Default for HsvSplitConfig {
    fn default() -> Self {
        HsvSplitConfig {
            hue_bins: 8,
            saturation_bins: 8,
            border: 0.2,
            restarts: 20,
            max_iterations: 100,
            fallback_test_fraction: TEST_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSplit {
    pub trainval: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes whose histograms were all identical and were split at random.
    pub fallback_classes: Vec<usize>,
}

/// Normalized hue–saturation histogram of the pixels in the border frame.
pub fn border_histogram(image: &Image, config: &HsvSplitConfig) -> Vec<f64> {
    let (h, w) = (image.height(), image.width());
    let frame = |side: usize| ((side as f64 * config.border).round() as usize).clamp(1, side);
    let (fr, fc) = (frame(h), frame(w));
    let (hb, sb) = (config.hue_bins, config.saturation_bins);
    let mut hist = vec![0.0; hb * sb];
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            let on_border = r < fr || r + fr >= h || c < fc || c + fc >= w;
            if !on_border {
                continue;
            }
            let (hue, sat, _) = rgb_to_hsv(image.pixel(r, c));
            let hi = ((hue * hb as f64) as usize).min(hb - 1);
            let si = ((sat * sb as f64) as usize).min(sb - 1);
            hist[hi * sb + si] += 1.0;
            count += 1;
        }
    }
    for v in &mut hist {
        *v /= count as f64;
    }
    hist
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Two-cluster k-means with seeded restarts; returns a 0/1 assignment with the
/// lowest within-cluster sum of squares (first restart wins ties).
fn two_means(points: &[&[f64]], config: &HsvSplitConfig, rng: &mut impl Rng) -> Option<Vec<usize>> {
    let n = points.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..config.restarts.max(1) {
        let first = rng.random_range(0..n);
        let distinct: Vec<usize> = (0..n)
            .filter(|&j| sq_dist(points[j], points[first]) > 0.0)
            .collect();
        if distinct.is_empty() {
            return None;
        }
        let second = distinct[rng.random_range(0..distinct.len())];
        let mut centres = [points[first].to_vec(), points[second].to_vec()];
        let mut assign = vec![usize::MAX; n];
        for _ in 0..config.max_iterations {
            let next: Vec<usize> = points
                .iter()
                .map(|p| usize::from(sq_dist(p, &centres[1]) < sq_dist(p, &centres[0])))
                .collect();
            if next == assign {
                break;
            }
            assign = next;
            for (k, centre) in centres.iter_mut().enumerate() {
                let members: Vec<&[f64]> = points
                    .iter()
                    .zip(&assign)
                    .filter(|&(_, &a)| a == k)
                    .map(|(p, _)| *p)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                for (d, c) in centre.iter_mut().enumerate() {
                    *c = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        let inertia: f64 = points
            .iter()
            .zip(&assign)
            .map(|(p, &a)| sq_dist(p, &centres[a]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.map(|(_, a)| a)
}

/// Per class, clusters border colour histograms into two groups and sends the
/// smaller group to the test split (on equal sizes, the group not containing
/// the class's first image).
pub fn hsv_context_split(
    images: &[Image],
    labels: &[usize],
    seed: u64,
    config: &HsvSplitConfig,
) -> Result<ContextSplit> {
    if images.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if config.hue_bins == 0
        || config.saturation_bins == 0
        || !(config.border > 0.0 && config.border <= 0.5)
    {
        return Err(Error::Validation(
            "histogram bins must be positive and border in (0, 0.5]".into(),
        ));
    }
    let classes = by_class(labels);
    if let Some((class, m)) = classes.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::Validation(format!(
            "class {class} has {} images; at least 2 are required",
            m.len()
        )));
    }
    let hists: Vec<Vec<f64>> = images
        .iter()
        .map(|im| border_histogram(im, config))
        .collect();
    let mut split = ContextSplit {
        trainval: Vec::new(),
        test: Vec::new(),
        fallback_classes: Vec::new(),
    };
    for (class, members) in &classes {
        let mut rng = stream_rng(seed, &format!("split/hsv/{class}"));
        let points: Vec<&[f64]> = members.iter().map(|&i| hists[i].as_slice()).collect();
        match two_means(&points, config, &mut rng) {
            Some(assign) => {
                let ones = assign.iter().filter(|&&a| a == 1).count();
                let zeros = assign.len() - ones;
                let test_cluster = match zeros.cmp(&ones) {
                    std::cmp::Ordering::Less => 0,
                    std::cmp::Ordering::Greater => 1,
                    std::cmp::Ordering::Equal => 1 - assign[0],
                };
                for (&i, &a) in members.iter().zip(&assign) {
                    if a == test_cluster {
                        split.test.push(i);
                    } else {
                        split.trainval.push(i);
                    }
                }
            }
            None => {
                split.fallback_classes.push(*class);
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                let t = test_count(shuffled.len(), config.fallback_test_fraction).max(1);
                split.test.extend_from_slice(&shuffled[..t]);
                split.trainval.extend_from_slice(&shuffled[t..]);
            }
        }
    }
    split.test.sort_unstable();
    split.trainval.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::hsv_to_rgb;

    fn labels(per_class: usize, classes: usize) -> Vec<usize> {
        (0..per_class * classes).map(|i| i % classes).collect()
    }

    #[test]
    fn two_by_forty_counts() {
        let l = labels(40, 2);
        let s = stratified_splits(&l, 3).unwrap();
        for class in 0..2 {
            assert_eq!(s.test.iter().filter(|&&i| l[i] == class).count(), 12);
            for f in &s.folds {
                assert_eq!(f.val.iter().filter(|&&i| l[i] == class).count(), 7);
                assert_eq!(f.train.iter().filter(|&&i| l[i] == class).count(), 21);
            }
        }
    }

    #[test]
    fn splits_are_disjoint_covering_and_deterministic() {
        let l: Vec<usize> = (0..57).map(|i| i % 3).collect();
        let s = stratified_splits(&l, 11).unwrap();
        assert_eq!(s, stratified_splits(&l, 11).unwrap());
        assert_ne!(s, stratified_splits(&l, 12).unwrap());
        for f in &s.folds {
            let mut all: Vec<usize> = s
                .test
                .iter()
                .chain(&f.train)
                .chain(&f.val)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..57).collect::<Vec<_>>());
        }
        let mut vals: Vec<usize> = s.folds.iter().flat_map(|f| f.val.iter().copied()).collect();
        vals.sort_unstable();
        vals.dedup();
        assert_eq!(vals.len(), 57 - s.test.len());
    }

    #[test]
    fn stratification_errors() {
        assert!(stratified_splits(&[0; 20], 0).is_err());
        let mut l = labels(10, 2);
        l.truncate(15); // class 1 now has 7 members
        let err = stratified_splits(&l, 0).unwrap_err().to_string();
        assert!(err.contains("class 1"), "{err}");
    }

    fn framed(hue: f64, size: usize) -> Image {
        let bg = hsv_to_rgb(hue, 0.9, 0.8);
        Image::from_fn(size, size, |r, c| {
            let inner = (4..size - 4).contains(&r) && (4..size - 4).contains(&c);
            if inner {
                [0.5, 0.5, 0.5]
            } else {
                bg
            }
        })
    }

    #[test]
    fn planted_two_hue_class_separates() {
        let hues = [0.6, 0.6, 0.0, 0.6, 0.6, 0.0, 0.6, 0.6, 0.6, 0.0];
        let images: Vec<Image> = hues.iter().map(|&h| framed(h, 16)).collect();
        let l = vec![0; hues.len()];
        let s = hsv_context_split(&images, &l, 5, &HsvSplitConfig::default()).unwrap();
        assert_eq!(s.test, vec![2, 5, 9]);
        assert!(s.fallback_classes.is_empty());
        assert_eq!(
            s,
            hsv_context_split(&images, &l, 5, &HsvSplitConfig::default()).unwrap()
        );
    }

    #[test]
    fn identical_images_fall_back() {
        let images: Vec<Image> = (0..10).map(|_| framed(0.3, 12)).collect();
        let s = hsv_context_split(&images, &[1; 10], 2, &HsvSplitConfig::default()).unwrap();
        assert_eq!(s.fallback_classes, vec![1]);
        assert_eq!(s.test.len(), 3);
        assert_eq!(s.trainval.len(), 7);
    }

    #[test]
    fn histogram_sums_to_one() {
        let h = border_histogram(&framed(0.1, 10), &HsvSplitConfig::default());
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
