//! Contrastivity metrics: embedding-space distances, activation entropy and
//! pairwise location contrast between a sample's most activated prototypes.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::perturb::binarize_similarity;

use super::change::manhattan;

/// A vector that belongs to one or more classes. Members of different classes
/// sharing a key are the same object (e.g. a prototype used by two classes) and
/// are never compared across those classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub key: usize,
    pub vector: Vec<f64>,
}

/// Per-class vector sets (prototype sets `P_k` or nearest-feature sets `F_k`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassVectorSets {
    classes: Vec<Vec<Member>>,
}

impl ClassVectorSets {
    pub fn new(classes: Vec<Vec<Member>>) -> Self {
        ClassVectorSets { classes }
    }

    /// Builds sets where every vector is its own key.
    pub fn unkeyed(classes: Vec<Vec<Vec<f64>>>) -> Self {
        let mut next = 0;
        let classes = classes
            .into_iter()
            .map(|set| {
                set.into_iter()
                    .map(|vector| {
                        next += 1;
                        Member {
                            key: next - 1,
                            vector,
                        }
                    })
                    .collect()
            })
            .collect();
        ClassVectorSets { classes }
    }

    pub fn classes(&self) -> &[Vec<Member>] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    fn check_norms(&self) -> Result<()> {
        for (k, set) in self.classes.iter().enumerate() {
            for m in set {
                let n = norm(&m.vector);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::Validation(format!(
                        "class {k} member {} has a zero or non-finite norm",
                        m.key
                    )));
                }
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)`, clamped into `[0, 2]` against rounding.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (norm(a) * norm(b))).clamp(0.0, 2.0)
}

/// Mean over classes, over members of the class, over members of every other
/// class not also in this class, of the cosine distance.
pub fn mean_cosine_distance_inter(sets: &ClassVectorSets) -> Result<f64> {
    if sets.class_count() < 2 {
        return Err(Error::Validation(format!(
            "inter-class distance needs at least 2 classes, got {}",
            sets.class_count()
        )));
    }
    if let Some(k) = sets.classes.iter().position(Vec::is_empty) {
        return Err(Error::Validation(format!(
            "class {k} has an empty vector set"
        )));
    }
    sets.check_norms()?;
    let mut outer = 0.0;
    for (k, own) in sets.classes.iter().enumerate() {
        let own_keys: Vec<usize> = own.iter().map(|m| m.key).collect();
        let others: Vec<&Member> = sets
            .classes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, set)| set)
            .filter(|m| !own_keys.contains(&m.key))
            .collect();
        if others.is_empty() {
            return Err(Error::Validation(format!(
                "class {k} shares every vector with the other classes"
            )));
        }
        let mut per_class = 0.0;
        for p in own {
            let s: f64 = others
                .iter()
                .map(|q| cosine_distance(&p.vector, &q.vector))
                .sum();
            per_class += s / others.len() as f64;
        }
        outer += per_class / own.len() as f64;
    }
    Ok(outer / sets.class_count() as f64)
}

/// Result of the intra-class distance: the mean over eligible classes plus the
/// classes that were skipped because they have fewer than two members.
#[derive(Debug, Clone, PartialEq)]
pub struct IntraDistance {
    pub value: Option<f64>,
    pub skipped_classes: Vec<usize>,
}

/// Mean over classes, over members, over the *other* members of the same class.
pub fn mean_cosine_distance_intra(sets: &ClassVectorSets) -> Result<IntraDistance> {
    sets.check_norms()?;
    let mut skipped_classes = Vec::new();
    let mut sum = 0.0;
    let mut used = 0usize;
    for (k, set) in sets.classes.iter().enumerate() {
        if set.len() < 2 {
            skipped_classes.push(k);
            continue;
        }
        let mut per_class = 0.0;
        for (i, p) in set.iter().enumerate() {
            let s: f64 = set
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| cosine_distance(&p.vector, &q.vector))
                .sum();
            per_class += s / (set.len() - 1) as f64;
        }
        sum += per_class / set.len() as f64;
        used += 1;
    }
    Ok(IntraDistance {
        value: (used > 0).then(|| sum / used as f64),
        skipped_classes,
    })
}

/// Shannon entropy (natural log) of the histogram of max-normalized scores.
pub fn activation_entropy(scores: &[f64], bins: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::DegenerateSeries("score series is empty".into()));
    }
    if bins == 0 {
        return Err(Error::Validation("entropy needs at least one bin".into()));
    }
    if scores.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation(
            "scores must be finite and nonnegative".into(),
        ));
    }
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::DegenerateSeries("all scores are zero".into()));
    }
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let x = s / max;
        let b = ((x * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = scores.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

fn pairwise_mean(maps: &[&Grid], f: impl Fn(&Grid, &Grid) -> Result<f64>) -> Result<f64> {
    if maps.len() < 2 {
        return Err(Error::Validation(format!(
            "pairwise contrast needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            sum += f(maps[i], maps[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Mean Manhattan distance between argmax cells over all unordered pairs.
pub fn pairwise_plc_contra(maps: &[&Grid]) -> Result<f64> {
    pairwise_mean(maps, |a, b| {
        a.same_dims(b)?;
        Ok(manhattan(a.argmax(), b.argmax()) as f64)
    })
}

/// Mean `1 - IoU` of binarized maps over all unordered pairs.
pub fn pairwise_palc_contra(maps: &[&Grid]) -> Result<f64> {
    pairwise_mean(maps, |a, b| {
        a.same_dims(b)?;
        Ok(1.0 - binarize_similarity(a).iou(&binarize_similarity(b)))
    })
}

/// Indices of the `k` largest scores, descending, lower index first on ties.
/// With fewer than `k` scores every index is returned.
pub fn top_k_prototypes(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
