//! Multi-label training objectives, evaluated (not differentiated) on stored artifacts.

use serde::{Deserialize, Serialize};

use super::{squared_distance, FeatureMap};
use crate::error::{shape_err, validation_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Cluster,
    Separation,
    Margin,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub kind: LossKind,
    pub value: f64,
}

/// One training sample for the latent-space losses.
#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a> {
    pub features: &'a FeatureMap,
    pub labels: &'a [usize],
}

/// Prototype vectors plus the per-class membership lists `P_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    prototypes: Vec<Vec<f64>>,
    members: Vec<Vec<usize>>,
}

impl ClassPrototypes {
    pub fn new(prototypes: Vec<Vec<f64>>, members: Vec<Vec<usize>>) -> Result<Self> {
        let n = prototypes.len();
        if let Some(bad) = members.iter().flatten().find(|&&j| j >= n) {
            return Err(shape_err!(
                "class member {bad} out of range for {n} prototypes"
            ));
        }
        Ok(ClassPrototypes {
            prototypes,
            members,
        })
    }

    /// Membership from a class-of-prototype vector.
    pub fn from_assignment(
        prototypes: Vec<Vec<f64>>,
        class_of: &[usize],
        classes: usize,
    ) -> Result<Self> {
        if class_of.len() != prototypes.len() {
            return Err(shape_err!(
                "{} class ids for {} prototypes",
                class_of.len(),
                prototypes.len()
            ));
        }
        let mut members = vec![Vec::new(); classes];
        for (j, &k) in class_of.iter().enumerate() {
            members
                .get_mut(k)
                .ok_or_else(|| shape_err!("class {k} out of range for {classes} classes"))?
                .push(j);
        }
        ClassPrototypes::new(prototypes, members)
    }

    pub fn class_count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }
}

/// Per prototype, the smallest squared distance to any cell of the feature map.
fn min_cell_distances(features: &FeatureMap, protos: &ClassPrototypes) -> Result<Vec<f64>> {
    protos
        .prototypes
        .iter()
        .map(|p| {
            if p.len() != features.depth() {
                return Err(shape_err!(
                    "prototype depth {} does not match feature depth {}",
                    p.len(),
                    features.depth()
                ));
            }
            Ok(features
                .cells()
                .map(|z| squared_distance(z, p))
                .fold(f64::INFINITY, f64::min))
        })
        .collect()
}

fn class_of_sample(labels: &[usize], classes: usize, idx: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(validation_err!("sample {idx} has no labels"));
    }
    if let Some(k) = labels.iter().find(|&&k| k >= classes) {
        return Err(validation_err!(
            "sample {idx} has label {k} outside {classes} classes"
        ));
    }
    Ok(())
}

/// Mean over samples of the mean (over assigned classes) nearest in-class prototype distance.
pub fn cluster_loss_multilabel(
    samples: &[LossSample<'_>],
    protos: &ClassPrototypes,
) -> Result<LossValue> {
    mean_class_distance(samples, protos, true).map(|value| LossValue {
        kind: LossKind::Cluster,
        value,
    })
}

/// Negated mean distance to the nearest prototype outside each assigned class.
pub fn separation_loss_multilabel(
    samples: &[LossSample<'_>],
    protos: &ClassPrototypes,
) -> Result<LossValue> {
    mean_class_distance(samples, protos, false).map(|value| LossValue {
        kind: LossKind::Separation,
        value: -value,
    })
}

fn mean_class_distance(
    samples: &[LossSample<'_>],
    protos: &ClassPrototypes,
    inside: bool,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(validation_err!("loss needs at least one sample"));
    }
    let n = protos.prototypes.len();
    let mut total = 0.0;
    for (idx, sample) in samples.iter().enumerate() {
        class_of_sample(sample.labels, protos.class_count(), idx)?;
        let dists = min_cell_distances(sample.features, protos)?;
        let mut per_sample = 0.0;
        for &k in sample.labels {
            let members = protos.members(k);
            let candidates: Vec<usize> = if inside {
                members.to_vec()
            } else {
                (0..n).filter(|j| !members.contains(j)).collect()
            };
            if candidates.is_empty() {
                return Err(if inside {
                    validation_err!("class {k} has no prototypes")
                } else {
                    validation_err!("every prototype belongs to class {k}; separation is undefined")
                });
            }
            per_sample += candidates
                .iter()
                .map(|&j| dists[j])
                .fold(f64::INFINITY, f64::min);
        }
        total += per_sample / sample.labels.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Hinge loss over all (positive, negative) class pairs, divided by the class count.
pub fn margin_loss_multilabel(
    output: &[f64],
    labels: &[usize],
    class_count: usize,
) -> Result<LossValue> {
    if output.len() != class_count {
        return Err(shape_err!(
            "output has {} logits for {class_count} classes",
            output.len()
        ));
    }
    let mut positive = vec![false; class_count];
    for &k in labels {
        *positive
            .get_mut(k)
            .ok_or_else(|| validation_err!("label {k} outside {class_count} classes"))? = true;
    }
    let npos = positive.iter().filter(|&&p| p).count();
    if npos == 0 || npos == class_count {
        return Err(validation_err!(
            "label set must be a nonempty proper subset of the classes"
        ));
    }
    let mut total = 0.0;
    for j in (0..class_count).filter(|&j| positive[j]) {
        for i in (0..class_count).filter(|&i| !positive[i]) {
            total += (1.0 - (output[j] - output[i])).max(0.0);
        }
    }
    Ok(LossValue {
        kind: LossKind::Margin,
        value: total / class_count as f64,
    })
}

/// Mean cosine similarity over every unordered pair of slot distributions.
pub fn orthogonal_loss(slots: &[&[f64]]) -> Result<LossValue> {
    if slots.len() < 2 {
        return Err(validation_err!("orthogonal loss needs at least two slots"));
    }
    let dim = slots[0].len();
    if let Some(s) = slots.iter().find(|s| s.len() != dim) {
        return Err(shape_err!("slot lengths differ: {} vs {dim}", s.len()));
    }
    let norms: Vec<f64> = slots
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(validation_err!("slot {i} has zero norm"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..slots.len() {
        for b in a + 1..slots.len() {
            let dot: f64 = slots[a].iter().zip(slots[b]).map(|(x, y)| x * y).sum();
            total += dot / (norms[a] * norms[b]);
            pairs += 1;
        }
    }
    Ok(LossValue {
        kind: LossKind::Orthogonal,
        value: total / pairs as f64,
    })
}
