//! Typed, validated in-memory bundles built from a manifest and its tensors.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::{
    Manifest, ModelEntry, PartPoint, PerturbedEntry, PerturbedMode, Protocol, SaliencyEntry,
    SampleEntry,
};
use super::tensor::{read_tensor, write_tensor, Tensor};
use crate::error::{Error, Result};
use crate::grid::{Grid, Image, Mask};
use crate::kernel::{
    check_distribution, ClassPrototypes, FeatureMap, ModelKind, PrototypeLayer, SlotAssignment,
    DEFAULT_EPSILON,
};

/// Max-pool vs stored score tolerance.
pub const SCORE_TOLERANCE: f64 = 1e-5;
/// Regenerated vs stored similarity tolerance for explicit models.
pub const REGENERATION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: ModelKind,
    /// `n × D` prototype vectors; absent for indirect models.
    pub prototypes: Option<Vec<Vec<f64>>>,
    pub slot_assignment: Option<SlotAssignment>,
    /// `K × n`, or `K × L` when a slot assignment is present.
    pub classifier_weights: Grid,
    pub class_of_prototype: Option<Vec<usize>>,
    pub epsilon: f64,
}

impl ModelBundle {
    pub fn class_count(&self) -> usize {
        self.classifier_weights.rows()
    }

    pub fn prototype_count(&self) -> usize {
        match (&self.prototypes, &self.slot_assignment) {
            (Some(p), _) => p.len(),
            (None, Some(s)) => s.prototypes(),
            (None, None) => self.classifier_weights.cols(),
        }
    }

    pub fn layer(&self) -> PrototypeLayer<'_> {
        PrototypeLayer {
            kind: self.kind,
            prototypes: self.prototypes.as_deref(),
            slots: self.slot_assignment.as_ref(),
            weights: &self.classifier_weights,
            epsilon: self.epsilon,
        }
    }

    /// Weight matrix whose columns are prototypes, used by the global-size count.
    pub fn prototype_presence(&self) -> Grid {
        match &self.slot_assignment {
            Some(slots) => slots.presence(),
            None => self.classifier_weights.clone(),
        }
    }

    /// Class membership of prototypes for the latent-space losses.
    pub fn class_prototypes(&self) -> Result<ClassPrototypes> {
        let protos = self
            .prototypes
            .clone()
            .ok_or_else(|| Error::Validation("model has no prototype vectors".into()))?;
        match (&self.class_of_prototype, &self.slot_assignment) {
            (Some(class_of), _) => {
                ClassPrototypes::from_assignment(protos, class_of, self.class_count())
            }
            (None, Some(slots)) => {
                let presence = slots.presence();
                let members = (0..slots.classes())
                    .map(|k| {
                        (0..slots.prototypes())
                            .filter(|&i| presence.get(k, i) > 0.0)
                            .collect()
                    })
                    .collect();
                ClassPrototypes::new(protos, members)
            }
            (None, None) => Err(Error::Validation(
                "model has neither class assignment nor slot assignment".into(),
            )),
        }
    }

    fn violations(&self, class_count: usize, out: &mut Vec<Violation>) {
        let mut push = |msg: String| out.push(Violation::model(msg));
        let w = &self.classifier_weights;
        if !w.is_finite() {
            push("classifier weights contain non-finite values".into());
        }
        if w.rows() != class_count {
            push(format!(
                "classifier weights have {} rows but class_count is {class_count}",
                w.rows()
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            push(format!("epsilon {} outside (0, 1)", self.epsilon));
        }
        match (self.kind.has_prototype_vectors(), &self.prototypes) {
            (true, None) => push("explicit model without prototype vectors".into()),
            (false, Some(_)) => push("indirect model must not carry prototype vectors".into()),
            _ => {}
        }
        if let Some(protos) = &self.prototypes {
            if protos.iter().flatten().any(|v| !v.is_finite()) {
                push("prototype vectors contain non-finite values".into());
            }
        }
        let is_specific = self.kind == ModelKind::ExplicitClassSpecific;
        match (&self.class_of_prototype, is_specific) {
            (None, true) => push("class_of_prototype is required for class-specific models".into()),
            (Some(_), false) => {
                push("class_of_prototype is only allowed for class-specific models".into())
            }
            (Some(class_of), true) => {
                if class_of.len() != self.prototype_count() {
                    push(format!(
                        "class_of_prototype has {} entries for {} prototypes",
                        class_of.len(),
                        self.prototype_count()
                    ));
                }
                if let Some(k) = class_of.iter().find(|&&k| k >= class_count) {
                    push(format!(
                        "class_of_prototype entry {k} outside {class_count} classes"
                    ));
                }
            }
            (None, false) => {}
        }
        match &self.slot_assignment {
            Some(slots) => {
                if self.kind != ModelKind::ExplicitShared {
                    push("slot assignment is only allowed for shared explicit models".into());
                }
                if slots.classes() != class_count {
                    push(format!(
                        "slot assignment covers {} classes, expected {class_count}",
                        slots.classes()
                    ));
                }
                if let Some(p) = &self.prototypes {
                    if slots.prototypes() != p.len() {
                        push(format!(
                            "slot distributions span {} prototypes, model has {}",
                            slots.prototypes(),
                            p.len()
                        ));
                    }
                }
                for (i, dist) in slots.distributions().enumerate() {
                    if check_distribution(dist).is_err() {
                        let sum: f64 = dist.iter().sum();
                        push(format!(
                            "slot distribution (class {}, slot {}) sums to {sum}, expected 1",
                            i / slots.slots(),
                            i % slots.slots()
                        ));
                    }
                }
                if w.cols() != slots.slots() {
                    push(format!(
                        "classifier weights have {} columns, slot head needs {}",
                        w.cols(),
                        slots.slots()
                    ));
                }
            }
            None => {
                if let Some(p) = &self.prototypes {
                    if w.cols() != p.len() {
                        push(format!(
                            "classifier weights have {} columns for {} prototypes",
                            w.cols(),
                            p.len()
                        ));
                    }
                }
            }
        }
    }
}

/// Artifacts of one perturbed input (see [`PerturbedEntry`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedRecord {
    pub protocol: Protocol,
    pub prototype: Option<usize>,
    pub feature_map: Option<FeatureMap>,
    pub similarity_maps: Option<Vec<Grid>>,
    pub similarity_scores: Option<Vec<f64>>,
    pub output: Option<Vec<f64>>,
    pub saliency_map: Option<Grid>,
}

/// One test image and every artifact exported for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBundle {
    pub id: String,
    pub image: Image,
    pub feature_map: Option<FeatureMap>,
    pub similarity_maps: Vec<Grid>,
    pub similarity_scores: Vec<f64>,
    pub saliency_maps: BTreeMap<usize, Grid>,
    pub object_mask: Option<Mask>,
    pub parts: Vec<PartPoint>,
    pub labels: Vec<usize>,
    pub output: Vec<f64>,
    pub perturbed: Vec<PerturbedRecord>,
}

impl SampleBundle {
    pub fn perturbed_record(
        &self,
        protocol: Protocol,
        prototype: Option<usize>,
    ) -> Option<&PerturbedRecord> {
        self.perturbed
            .iter()
            .find(|r| r.protocol == protocol && r.prototype == prototype)
    }

    fn violations(&self, ctx: &BundleContext<'_>, out: &mut Vec<Violation>) {
        let mut push = |msg: String| out.push(Violation::sample(&self.id, msg));
        let k = ctx.class_count;
        let n = ctx.model.prototype_count();

        if self.labels.is_empty() {
            push("sample has no labels".into());
        }
        if !ctx.multilabel && self.labels.len() > 1 {
            push(format!("{} labels in single-label mode", self.labels.len()));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= k) {
            push(format!("label {bad} outside {k} classes"));
        }
        if self.labels.iter().collect::<HashSet<_>>().len() != self.labels.len() {
            push("duplicate labels".into());
        }
        if !self.image.in_unit_range() {
            push("image values outside [0, 1]".into());
        }
        if self.output.len() != k {
            push(format!(
                "output has {} logits for {k} classes",
                self.output.len()
            ));
        }
        if self.output.iter().any(|v| !v.is_finite()) {
            push("output contains non-finite values".into());
        }
        if self.similarity_maps.len() != self.similarity_scores.len() {
            push(format!(
                "{} similarity maps but {} similarity scores",
                self.similarity_maps.len(),
                self.similarity_scores.len()
            ));
        }
        if self.similarity_maps.len() != n {
            push(format!(
                "{} similarity maps for a model with {n} prototypes",
                self.similarity_maps.len()
            ));
        }
        for (m, (map, &score)) in self
            .similarity_maps
            .iter()
            .zip(&self.similarity_scores)
            .enumerate()
        {
            if !map.is_finite() || !score.is_finite() {
                push(format!("similarity map {m} or its score is non-finite"));
                continue;
            }
            if (map.max() - score).abs() > SCORE_TOLERANCE {
                push(format!(
                    "similarity score {m} is {score} but its map max-pools to {}",
                    map.max()
                ));
            }
        }
        let map_dims = self.similarity_maps.first().map(Grid::dims);
        if let Some(fm) = &self.feature_map {
            if map_dims.is_some_and(|d| d != (fm.height(), fm.width())) {
                push(format!(
                    "feature map is {}x{} but similarity maps are {:?}",
                    fm.height(),
                    fm.width(),
                    map_dims.unwrap()
                ));
            } else if let Some(protos) = &ctx.model.prototypes {
                if protos.first().is_some_and(|p| p.len() != fm.depth()) {
                    push(format!(
                        "feature depth {} does not match prototype depth {}",
                        fm.depth(),
                        protos[0].len()
                    ));
                } else if self.similarity_maps.len() == protos.len() {
                    self.check_regeneration(ctx, fm, &mut push);
                }
            } else if fm.depth() != n {
                push(format!(
                    "indirect feature map has {} channels for {n} prototypes",
                    fm.depth()
                ));
            }
        }
        let img_dims = (self.image.height(), self.image.width());
        for (&p, sal) in &self.saliency_maps {
            if p >= n {
                push(format!("saliency map for unknown prototype {p}"));
            }
            if sal.dims() != img_dims {
                push(format!(
                    "saliency map {p} is {:?}, image is {img_dims:?}",
                    sal.dims()
                ));
            }
            if !sal.is_finite() || sal.values().iter().any(|&v| v < 0.0) {
                push(format!("saliency map {p} must be finite and nonnegative"));
            }
        }
        if let Some(mask) = &self.object_mask {
            if mask.dims() != img_dims {
                push(format!(
                    "object mask is {:?}, image is {img_dims:?}",
                    mask.dims()
                ));
            }
        }
        let mut seen = HashSet::new();
        for part in &self.parts {
            if !seen.insert(part.part_id) {
                push(format!("part id {} appears twice", part.part_id));
            }
            if !ctx.part_vocabulary.is_empty() && !ctx.part_vocabulary.contains(&part.part_id) {
                push(format!(
                    "part id {} not in the part vocabulary",
                    part.part_id
                ));
            }
            if !part.row.is_finite() || !part.col.is_finite() {
                push(format!("part {} has non-finite coordinates", part.part_id));
            }
        }
        let mut keys = HashSet::new();
        for rec in &self.perturbed {
            let label = format!("perturbed {:?}/{:?}", rec.protocol, rec.prototype);
            if !keys.insert((rec.protocol, rec.prototype)) {
                push(format!("{label} listed twice"));
            }
            match (rec.protocol, rec.prototype) {
                (Protocol::Completeness, None) => push(format!("{label} needs a prototype id")),
                (Protocol::Completeness, Some(p)) if p >= n => {
                    push(format!("{label} names unknown prototype"))
                }
                (Protocol::Continuity, Some(_)) => {
                    push(format!("{label} must not name a prototype"))
                }
                _ => {}
            }
            match ctx.perturbed_mode {
                PerturbedMode::Regenerate if rec.feature_map.is_none() => {
                    push(format!("{label} lacks a feature map (regenerate mode)"))
                }
                PerturbedMode::Bundle
                    if rec.similarity_maps.is_none()
                        || rec.similarity_scores.is_none()
                        || rec.output.is_none() =>
                {
                    push(format!(
                        "{label} needs similarity maps, scores and output (bundle mode)"
                    ))
                }
                _ => {}
            }
            if let (Some(maps), Some(scores)) = (&rec.similarity_maps, &rec.similarity_scores) {
                if maps.len() != n || scores.len() != n {
                    push(format!(
                        "{label} has {} maps / {} scores for {n} prototypes",
                        maps.len(),
                        scores.len()
                    ));
                }
                for (m, (map, &s)) in maps.iter().zip(scores).enumerate() {
                    if Some(map.dims()) != map_dims {
                        push(format!("{label} map {m} has dims {:?}", map.dims()));
                    }
                    if (map.max() - s).abs() > SCORE_TOLERANCE {
                        push(format!("{label} score {m} does not match its map"));
                    }
                }
            }
            if let Some(out) = &rec.output {
                if out.len() != k {
                    push(format!("{label} output has {} logits", out.len()));
                }
            }
            if let Some(fm) = &rec.feature_map {
                if let Some(orig) = &self.feature_map {
                    if (fm.height(), fm.width(), fm.depth())
                        != (orig.height(), orig.width(), orig.depth())
                    {
                        push(format!("{label} feature map dims differ from the original"));
                    }
                }
            }
            if let Some(sal) = &rec.saliency_map {
                if sal.dims() != img_dims
                    || sal.values().iter().any(|&v| !(v >= 0.0) || !v.is_finite())
                {
                    push(format!(
                        "{label} saliency must be finite, nonnegative, image-sized"
                    ));
                }
            }
        }
    }

    fn check_regeneration(
        &self,
        ctx: &BundleContext<'_>,
        fm: &FeatureMap,
        push: &mut impl FnMut(String),
    ) {
        let protos = ctx.model.prototypes.as_ref().expect("explicit model");
        for (m, (p, stored)) in protos.iter().zip(&self.similarity_maps).enumerate() {
            let Ok(regen) = crate::kernel::similarity_map(fm, p, ctx.model.epsilon) else {
                return;
            };
            let worst = regen
                .values()
                .iter()
                .zip(stored.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if worst > REGENERATION_TOLERANCE {
                push(format!(
                    "similarity map {m} differs from its regeneration by {worst:.3e}"
                ));
                return;
            }
        }
    }
}

struct BundleContext<'a> {
    class_count: usize,
    multilabel: bool,
    part_vocabulary: &'a [u32],
    perturbed_mode: PerturbedMode,
    model: &'a ModelBundle,
}

/// A fully validated dataset bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub dataset_name: String,
    pub class_count: usize,
    pub multilabel: bool,
    pub part_vocabulary: Vec<u32>,
    pub perturbed_mode: PerturbedMode,
    pub model: ModelBundle,
    pub samples: Vec<SampleBundle>,
}

/// One failed invariant, attributed to a sample when it is sample-local.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub sample_id: Option<String>,
    pub message: String,
}

impl Violation {
    fn model(message: String) -> Self {
        Violation {
            sample_id: None,
            message,
        }
    }

    fn sample(id: &str, message: String) -> Self {
        Violation {
            sample_id: Some(id.to_string()),
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sample_id {
            Some(id) => write!(f, "sample {id}: {}", self.message),
            None => write!(f, "model/dataset: {}", self.message),
        }
    }
}

impl Bundle {
    /// Every violated invariant; empty means the bundle is consistent.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.class_count < 2 {
            out.push(Violation::model(format!(
                "class_count must be >= 2, got {}",
                self.class_count
            )));
        }
        let mut ids = HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                out.push(Violation::sample(&s.id, "duplicate sample id".into()));
            }
        }
        self.model.violations(self.class_count, &mut out);
        let ctx = BundleContext {
            class_count: self.class_count,
            multilabel: self.multilabel,
            part_vocabulary: &self.part_vocabulary,
            perturbed_mode: self.perturbed_mode,
            model: &self.model,
        };
        for s in &self.samples {
            s.violations(&ctx, &mut out);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let violations = self.violations();
        if violations.is_empty() {
            return Ok(());
        }
        Err(Error::Validation(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }
}

/// Loads a manifest and all referenced tensors, then validates every invariant.
pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<Bundle> {
    let bundle = load_unvalidated(manifest_path)?;
    bundle.validate()?;
    Ok(bundle)
}

/// Loads without the invariant pass; structural problems still surface as errors.
pub fn load_unvalidated(manifest_path: impl AsRef<Path>) -> Result<Bundle> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path
        .parent()
        .unwrap_or(Path::new(""))
        .to_path_buf();
    let loader = Loader { base };

    let model = loader.model(&manifest.model)?;
    let samples = manifest
        .samples
        .iter()
        .map(|entry| loader.sample(entry))
        .collect::<Result<Vec<_>>>()?;
    Ok(Bundle {
        dataset_name: manifest.dataset_name,
        class_count: manifest.class_count,
        multilabel: manifest.multilabel,
        part_vocabulary: manifest.part_vocabulary,
        perturbed_mode: manifest.perturbed_mode,
        model,
        samples,
    })
}

struct Loader {
    base: PathBuf,
}

impl Loader {
    fn tensor(&self, rel: &str, expected_rank: usize, what: &str) -> Result<Tensor> {
        let path = self.base.join(rel);
        if !path.is_file() {
            return Err(Error::Manifest(format!(
                "{what}: missing file {}",
                path.display()
            )));
        }
        let t = read_tensor(&path)?;
        if t.rank() != expected_rank {
            return Err(Error::Validation(format!(
                "{what} ({}) must have rank {expected_rank}, has dims {:?}",
                path.display(),
                t.dims()
            )));
        }
        Ok(t)
    }

    fn grid(&self, rel: &str, what: &str) -> Result<Grid> {
        let t = self.tensor(rel, 2, what)?;
        Grid::new(t.dims()[0], t.dims()[1], t.to_f64())
    }

    fn vector(&self, rel: &str, what: &str) -> Result<Vec<f64>> {
        Ok(self.tensor(rel, 1, what)?.to_f64())
    }

    fn maps(&self, rel: &str, what: &str) -> Result<Vec<Grid>> {
        let t = self.tensor(rel, 3, what)?;
        let (n, h, w) = (t.dims()[0], t.dims()[1], t.dims()[2]);
        let data = t.to_f64();
        Ok((0..n)
            .map(|m| {
                Grid::new(h, w, data[m * h * w..(m + 1) * h * w].to_vec()).expect("dims checked")
            })
            .collect())
    }

    fn feature_map(&self, rel: &str, what: &str) -> Result<FeatureMap> {
        let t = self.tensor(rel, 3, what)?;
        FeatureMap::new(t.dims()[0], t.dims()[1], t.dims()[2], t.to_f64())
            .map_err(|e| Error::Validation(format!("{what}: {e}")))
    }

    fn model(&self, entry: &ModelEntry) -> Result<ModelBundle> {
        let w = self.tensor(&entry.classifier_weights, 2, "classifier_weights")?;
        let classifier_weights = Grid::new(w.dims()[0], w.dims()[1], w.to_f64())?;
        let prototypes = entry
            .prototypes
            .as_deref()
            .map(|rel| {
                let t = self.tensor(rel, 2, "prototypes")?;
                let d = t.dims()[1];
                Ok::<_, Error>(t.to_f64().chunks_exact(d).map(<[f64]>::to_vec).collect())
            })
            .transpose()?;
        let slot_assignment = entry
            .slot_assignment
            .as_deref()
            .map(|rel| {
                let t = self.tensor(rel, 3, "slot_assignment")?;
                SlotAssignment::new(t.dims()[0], t.dims()[1], t.dims()[2], t.to_f64())
            })
            .transpose()?;
        Ok(ModelBundle {
            kind: entry.kind,
            prototypes,
            slot_assignment,
            classifier_weights,
            class_of_prototype: entry.class_of_prototype.clone(),
            epsilon: entry.epsilon.unwrap_or(DEFAULT_EPSILON),
        })
    }

    fn sample(&self, entry: &SampleEntry) -> Result<SampleBundle> {
        let ctx = |what: &str| format!("sample {}: {what}", entry.id);
        let img = self.tensor(&entry.image, 3, &ctx("image"))?;
        if img.dims()[2] != Image::CHANNELS {
            return Err(Error::Validation(format!(
                "{} must have 3 channels, dims {:?}",
                ctx("image"),
                img.dims()
            )));
        }
        let image = Image::new(img.dims()[0], img.dims()[1], img.to_f64())?;
        let feature_map = entry
            .feature_map
            .as_deref()
            .map(|rel| self.feature_map(rel, &ctx("feature_map")))
            .transpose()?;
        let similarity_maps = self.maps(&entry.similarity_maps, &ctx("similarity_maps"))?;
        let similarity_scores = self.vector(&entry.similarity_scores, &ctx("similarity_scores"))?;
        let mut saliency_maps = BTreeMap::new();
        for SaliencyEntry { prototype, path } in &entry.saliency_maps {
            let g = self.grid(path, &ctx("saliency map"))?;
            if saliency_maps.insert(*prototype, g).is_some() {
                return Err(Error::Validation(format!(
                    "{} listed twice",
                    ctx(&format!("saliency map for prototype {prototype}"))
                )));
            }
        }
        let object_mask = entry
            .object_mask
            .as_deref()
            .map(|rel| {
                let g = self.grid(rel, &ctx("object_mask"))?;
                if g.values().iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Validation(format!(
                        "{} values must be 0 or 1",
                        ctx("object_mask")
                    )));
                }
                Ok(Mask::from_grid(&g, |v| v == 1.0))
            })
            .transpose()?;
        let output = self.vector(&entry.output, &ctx("output"))?;
        let perturbed = entry
            .perturbed
            .iter()
            .map(|p| self.perturbed(p, &entry.id))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleBundle {
            id: entry.id.clone(),
            image,
            feature_map,
            similarity_maps,
            similarity_scores,
            saliency_maps,
            object_mask,
            parts: entry.parts.clone(),
            labels: entry.labels.clone(),
            output,
            perturbed,
        })
    }

    fn perturbed(&self, entry: &PerturbedEntry, id: &str) -> Result<PerturbedRecord> {
        let what = |field: &str| format!("sample {id}: perturbed {:?} {field}", entry.protocol);
        Ok(PerturbedRecord {
            protocol: entry.protocol,
            prototype: entry.prototype,
            feature_map: entry
                .feature_map
                .as_deref()
                .map(|r| self.feature_map(r, &what("feature_map")))
                .transpose()?,
            similarity_maps: entry
                .similarity_maps
                .as_deref()
                .map(|r| self.maps(r, &what("similarity_maps")))
                .transpose()?,
            similarity_scores: entry
                .similarity_scores
                .as_deref()
                .map(|r| self.vector(r, &what("similarity_scores")))
                .transpose()?,
            output: entry
                .output
                .as_deref()
                .map(|r| self.vector(r, &what("output")))
                .transpose()?,
            saliency_map: entry
                .saliency_map
                .as_deref()
                .map(|r| self.grid(r, &what("saliency_map")))
                .transpose()?,
        })
    }
}

fn maps_tensor(maps: &[Grid]) -> Result<Tensor> {
    let (h, w) = maps
        .first()
        .map(Grid::dims)
        .ok_or_else(|| Error::Shape("no similarity maps to write".into()))?;
    let flat: Vec<f64> = maps
        .iter()
        .flat_map(|m| m.values().iter().copied())
        .collect();
    Tensor::from_f64(vec![maps.len(), h, w], &flat)
}

fn feature_tensor(fm: &FeatureMap) -> Result<Tensor> {
    Tensor::from_f64(vec![fm.height(), fm.width(), fm.depth()], fm.values())
}

struct Writer {
    base: PathBuf,
}

impl Writer {
    fn put(&self, rel: String, tensor: Tensor) -> Result<String> {
        let path = self.base.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_tensor(&tensor, &path)?;
        Ok(rel)
    }
}

/// Writes a bundle as a manifest plus tensor files under `dir`; returns the manifest path.
pub fn write_bundle(bundle: &Bundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let wr = Writer {
        base: dir.to_path_buf(),
    };
    let model = &bundle.model;
    let w = &model.classifier_weights;
    let model_entry = ModelEntry {
        kind: model.kind,
        prototypes: model
            .prototypes
            .as_ref()
            .map(|p| {
                let d = p.first().map_or(0, Vec::len);
                let flat: Vec<f64> = p.iter().flatten().copied().collect();
                wr.put(
                    "model/prototypes.qpt".into(),
                    Tensor::from_f64(vec![p.len(), d], &flat)?,
                )
            })
            .transpose()?,
        slot_assignment: model
            .slot_assignment
            .as_ref()
            .map(|s| {
                wr.put(
                    "model/slot_assignment.qpt".into(),
                    Tensor::from_f64(vec![s.classes(), s.slots(), s.prototypes()], s.values())?,
                )
            })
            .transpose()?,
        classifier_weights: wr.put(
            "model/classifier_weights.qpt".into(),
            Tensor::from_f64(vec![w.rows(), w.cols()], w.values())?,
        )?,
        class_of_prototype: model.class_of_prototype.clone(),
        epsilon: Some(model.epsilon),
    };

    let mut samples = Vec::with_capacity(bundle.samples.len());
    for (i, s) in bundle.samples.iter().enumerate() {
        let root = format!("samples/{i:05}");
        let img = &s.image;
        let mut saliency_maps = Vec::new();
        for (&p, g) in &s.saliency_maps {
            saliency_maps.push(SaliencyEntry {
                prototype: p,
                path: wr.put(
                    format!("{root}/saliency_{p}.qpt"),
                    Tensor::from_f64(vec![g.rows(), g.cols()], g.values())?,
                )?,
            });
        }
        let mut perturbed = Vec::new();
        for (j, rec) in s.perturbed.iter().enumerate() {
            let prefix = format!("{root}/perturbed_{j:03}");
            perturbed.push(PerturbedEntry {
                protocol: rec.protocol,
                prototype: rec.prototype,
                feature_map: rec
                    .feature_map
                    .as_ref()
                    .map(|fm| wr.put(format!("{prefix}_features.qpt"), feature_tensor(fm)?))
                    .transpose()?,
                similarity_maps: rec
                    .similarity_maps
                    .as_ref()
                    .map(|m| wr.put(format!("{prefix}_maps.qpt"), maps_tensor(m)?))
                    .transpose()?,
                similarity_scores: rec
                    .similarity_scores
                    .as_ref()
                    .map(|v| {
                        wr.put(
                            format!("{prefix}_scores.qpt"),
                            Tensor::from_f64(vec![v.len()], v)?,
                        )
                    })
                    .transpose()?,
                output: rec
                    .output
                    .as_ref()
                    .map(|v| {
                        wr.put(
                            format!("{prefix}_output.qpt"),
                            Tensor::from_f64(vec![v.len()], v)?,
                        )
                    })
                    .transpose()?,
                saliency_map: rec
                    .saliency_map
                    .as_ref()
                    .map(|g| {
                        wr.put(
                            format!("{prefix}_saliency.qpt"),
                            Tensor::from_f64(vec![g.rows(), g.cols()], g.values())?,
                        )
                    })
                    .transpose()?,
            });
        }
        samples.push(SampleEntry {
            id: s.id.clone(),
            image: wr.put(
                format!("{root}/image.qpt"),
                Tensor::from_f64(vec![img.height(), img.width(), 3], img.values())?,
            )?,
            feature_map: s
                .feature_map
                .as_ref()
                .map(|fm| wr.put(format!("{root}/features.qpt"), feature_tensor(fm)?))
                .transpose()?,
            similarity_maps: wr.put(
                format!("{root}/similarity_maps.qpt"),
                maps_tensor(&s.similarity_maps)?,
            )?,
            similarity_scores: wr.put(
                format!("{root}/similarity_scores.qpt"),
                Tensor::from_f64(vec![s.similarity_scores.len()], &s.similarity_scores)?,
            )?,
            saliency_maps,
            object_mask: s
                .object_mask
                .as_ref()
                .map(|m| {
                    let vals: Vec<f64> =
                        m.cells().iter().map(|&b| f64::from(u8::from(b))).collect();
                    wr.put(
                        format!("{root}/object_mask.qpt"),
                        Tensor::from_f64(vec![m.rows(), m.cols()], &vals)?,
                    )
                })
                .transpose()?,
            parts: s.parts.clone(),
            labels: s.labels.clone(),
            output: wr.put(
                format!("{root}/output.qpt"),
                Tensor::from_f64(vec![s.output.len()], &s.output)?,
            )?,
            perturbed,
        });
    }

    let manifest = Manifest {
        dataset_name: bundle.dataset_name.clone(),
        class_count: bundle.class_count,
        multilabel: bundle.multilabel,
        part_vocabulary: bundle.part_vocabulary.clone(),
        perturbed_mode: bundle.perturbed_mode,
        model: model_entry,
        samples,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

/// Sorted, de-duplicated part ids seen in a bundle's annotations.
pub fn observed_parts(samples: &[SampleBundle]) -> BTreeSet<u32> {
    samples
        .iter()
        .flat_map(|s| s.parts.iter().map(|p| p.part_id))
        .collect()
}
