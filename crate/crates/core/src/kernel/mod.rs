//! Prototype-layer forward math for the three supported architecture families.
//!
//! * explicit class-specific prototypes (log-ratio similarity, max pooling, linear head)
//! * explicit shared prototypes with slot assignment (focal similarity, slot aggregation)
//! * indirect prototypes (channel softmax, log-square output transform)

mod loss;

pub use loss::{
    cluster_loss_multilabel, margin_loss_multilabel, orthogonal_loss, separation_loss_multilabel,
    ClassPrototypes, LossKind, LossSample, LossValue,
};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Result};
use crate::grid::Grid;

/// Default ε of the log-ratio similarity.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Tolerance for a probability vector to count as normalized.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-5;

/// An `H × W × D` latent feature map; each cell holds one `D`-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(shape_err!(
                "feature map dims must be positive, got {height}x{width}x{depth}"
            ));
        }
        if data.len() != height * width * depth {
            return Err(shape_err!(
                "feature map {height}x{width}x{depth} needs {} values, got {}",
                height * width * depth,
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(validation_err!("feature map contains non-finite values"));
        }
        Ok(FeatureMap {
            height,
            width,
            depth,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.depth;
        &self.data[start..start + self.depth]
    }

    /// All cell vectors in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.depth)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Log-ratio similarity of a single squared distance.
#[inline]
pub fn log_similarity(dist_sq: f64, epsilon: f64) -> f64 {
    ((dist_sq + 1.0) / (dist_sq + epsilon)).ln()
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(validation_err!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    Ok(())
}

/// Similarity map of one prototype against every cell of a feature map.
pub fn similarity_map(features: &FeatureMap, prototype: &[f64], epsilon: f64) -> Result<Grid> {
    check_epsilon(epsilon)?;
    if prototype.len() != features.depth() {
        return Err(shape_err!(
            "prototype has {} dims, feature map depth is {}",
            prototype.len(),
            features.depth()
        ));
    }
    let values = features
        .cells()
        .map(|cell| log_similarity(squared_distance(cell, prototype), epsilon))
        .collect();
    Grid::new(features.height(), features.width(), values)
}

pub fn max_pool_score(map: &Grid) -> Result<f64> {
    if map.is_empty() {
        return Err(shape_err!("cannot pool an empty map"));
    }
    Ok(map.max())
}

/// Max minus mean of a map.
pub fn focal_similarity(map: &Grid) -> Result<f64> {
    if map.is_empty() {
        return Err(shape_err!("cannot pool an empty map"));
    }
    Ok(map.max() - map.mean())
}

pub fn check_distribution(dist: &[f64]) -> Result<()> {
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || dist.iter().any(|&q| q < 0.0) {
        return Err(validation_err!(
            "slot distribution must be nonnegative and sum to 1, sums to {sum}"
        ));
    }
    Ok(())
}

/// Weighted sum of per-prototype focal scores under one slot's distribution.
pub fn slot_aggregate(distribution: &[f64], focal_scores: &[f64]) -> Result<f64> {
    if distribution.len() != focal_scores.len() {
        return Err(shape_err!(
            "distribution has {} entries, scores have {}",
            distribution.len(),
            focal_scores.len()
        ));
    }
    check_distribution(distribution)?;
    Ok(distribution
        .iter()
        .zip(focal_scores)
        .map(|(q, g)| q * g)
        .sum())
}

/// Channel-wise softmax at every cell; map `d` holds channel `d`'s share.
pub fn pipnet_prototype_maps(features: &FeatureMap) -> Vec<Grid> {
    let (h, w, d) = (features.height(), features.width(), features.depth());
    let mut maps = vec![vec![0.0; h * w]; d];
    for (cell_idx, cell) in features.cells().enumerate() {
        let peak = cell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = cell.iter().map(|&v| (v - peak).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (ch, e) in exps.into_iter().enumerate() {
            maps[ch][cell_idx] = e / total;
        }
    }
    maps.into_iter()
        .map(|values| Grid::new(h, w, values).expect("dims come from a valid feature map"))
        .collect()
}

/// `log((score · weight)² + 1)`; weights must be nonnegative.
pub fn pipnet_output(score: f64, weight: f64) -> Result<f64> {
    if weight < 0.0 {
        return Err(validation_err!(
            "indirect-model weights must be nonnegative, got {weight}"
        ));
    }
    if score < 0.0 {
        return Err(validation_err!(
            "similarity score must be nonnegative, got {score}"
        ));
    }
    let x = score * weight;
    Ok((x * x).ln_1p())
}

/// Which family of prototype model produced a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ExplicitClassSpecific,
    ExplicitShared,
    Indirect,
}

impl ModelKind {
    pub fn has_prototype_vectors(self) -> bool {
        !matches!(self, ModelKind::Indirect)
    }
}

/// Class logits from prototype scores: a linear head for explicit models, the
/// summed log-square transform for indirect ones. `weights` is `K × n`.
pub fn classify(scores: &[f64], weights: &Grid, kind: ModelKind) -> Result<Vec<f64>> {
    if weights.cols() != scores.len() {
        return Err(shape_err!(
            "weight matrix has {} columns, got {} scores",
            weights.cols(),
            scores.len()
        ));
    }
    (0..weights.rows())
        .map(|k| {
            let row = &weights.values()[k * weights.cols()..(k + 1) * weights.cols()];
            match kind {
                ModelKind::Indirect => row
                    .iter()
                    .zip(scores)
                    .map(|(&w, &s)| pipnet_output(s, w))
                    .sum(),
                _ => Ok(row.iter().zip(scores).map(|(w, s)| w * s).sum()),
            }
        })
        .collect()
}

/// Replaces every prototype with its nearest candidate (lowest index wins ties).
pub fn project_prototypes(
    prototypes: &[Vec<f64>],
    candidates: &[Vec<Vec<f64>>],
) -> Result<Vec<Vec<f64>>> {
    if prototypes.len() != candidates.len() {
        return Err(shape_err!(
            "{} prototypes but {} candidate sets",
            prototypes.len(),
            candidates.len()
        ));
    }
    prototypes
        .iter()
        .zip(candidates)
        .enumerate()
        .map(|(m, (p, set))| {
            let mut best: Option<(f64, &Vec<f64>)> = None;
            for c in set {
                if c.len() != p.len() {
                    return Err(shape_err!(
                        "candidate for prototype {m} has {} dims, expected {}",
                        c.len(),
                        p.len()
                    ));
                }
                let d = squared_distance(p, c);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
            best.map(|(_, c)| c.clone())
                .ok_or_else(|| validation_err!("prototype {m} has no projection candidates"))
        })
        .collect()
}

/// Slot assignment of a shared-prototype model: `K × L` distributions over `n` prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAssignment {
    classes: usize,
    slots: usize,
    prototypes: usize,
    data: Vec<f64>,
}

impl SlotAssignment {
    pub fn new(classes: usize, slots: usize, prototypes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != classes * slots * prototypes {
            return Err(shape_err!(
                "slot assignment {classes}x{slots}x{prototypes} needs {} values, got {}",
                classes * slots * prototypes,
                data.len()
            ));
        }
        Ok(SlotAssignment {
            classes,
            slots,
            prototypes,
            data,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn prototypes(&self) -> usize {
        self.prototypes
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn distribution(&self, class: usize, slot: usize) -> &[f64] {
        let start = (class * self.slots + slot) * self.prototypes;
        &self.data[start..start + self.prototypes]
    }

    /// All slot distributions, class-major.
    pub fn distributions(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.prototypes)
    }

    /// `K × n` presence matrix: per class, the summed slot distributions.
    pub fn presence(&self) -> Grid {
        Grid::from_fn(self.classes, self.prototypes, |k, i| {
            (0..self.slots).map(|l| self.distribution(k, l)[i]).sum()
        })
    }
}

/// Similarity maps, scores and logits produced by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub similarity_maps: Vec<Grid>,
    pub similarity_scores: Vec<f64>,
    pub output: Vec<f64>,
}

/// Everything needed to run the prototype layer and head on a feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeLayer<'a> {
    pub kind: ModelKind,
    pub prototypes: Option<&'a [Vec<f64>]>,
    pub slots: Option<&'a SlotAssignment>,
    pub weights: &'a Grid,
    pub epsilon: f64,
}

impl PrototypeLayer<'_> {
    pub fn forward(&self, features: &FeatureMap) -> Result<Forward> {
        let maps = match (self.kind, self.prototypes) {
            (ModelKind::Indirect, _) => pipnet_prototype_maps(features),
            (_, Some(protos)) => protos
                .iter()
                .map(|p| similarity_map(features, p, self.epsilon))
                .collect::<Result<Vec<_>>>()?,
            (_, None) => return Err(validation_err!("explicit model without prototype vectors")),
        };
        let scores = maps
            .iter()
            .map(max_pool_score)
            .collect::<Result<Vec<_>>>()?;
        let output = match self.slots {
            Some(slots) if self.kind == ModelKind::ExplicitShared => {
                let focal = maps
                    .iter()
                    .map(focal_similarity)
                    .collect::<Result<Vec<_>>>()?;
                slot_logits(slots, &focal, self.weights)?
            }
            _ => classify(&scores, self.weights, self.kind)?,
        };
        Ok(Forward {
            similarity_maps: maps,
            similarity_scores: scores,
            output,
        })
    }
}

/// Logits of a slot-based head: `Σ_l W[k, l] · g_{k,l}` with `W` of shape `K × L`.
pub fn slot_logits(
    slots: &SlotAssignment,
    focal_scores: &[f64],
    weights: &Grid,
) -> Result<Vec<f64>> {
    if weights.rows() != slots.classes() || weights.cols() != slots.slots() {
        return Err(shape_err!(
            "slot head expects {}x{} weights, got {:?}",
            slots.classes(),
            slots.slots(),
            weights.dims()
        ));
    }
    (0..slots.classes())
        .map(|k| {
            (0..slots.slots()).try_fold(0.0, |acc, l| {
                Ok(acc
                    + weights.get(k, l) * slot_aggregate(slots.distribution(k, l), focal_scores)?)
            })
        })
        .collect()
}
