//! Perturbed inputs and the model artifacts observed on them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{SaliencySource, SuiteConfig};
use crate::error::{Error, Result};
use crate::grid::{Grid, Image};
use crate::interchange::{write_tensor, Bundle, PerturbedMode, Protocol, SampleBundle, Tensor};
use crate::metrics::top_k_prototypes;
use crate::perturb::rng::{completeness_identity, continuity_identity, stream_rng};
use crate::perturb::{
    bounding_box, occlude_outside, percentile_mask, photometric_suite, upscale_similarity,
    BoundingBox,
};
use crate::synthetic::ToyBackbone;

/// Saliency map of `prototype` on the original sample.
pub fn original_saliency(
    sample: &SampleBundle,
    prototype: usize,
    source: SaliencySource,
) -> Result<Grid> {
    match source {
        SaliencySource::Ingested => sample
            .saliency_maps
            .get(&prototype)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("no saliency map for prototype {prototype}"))),
        SaliencySource::Upscale => {
            let map = sample.similarity_maps.get(prototype).ok_or_else(|| {
                Error::Validation(format!("no similarity map for prototype {prototype}"))
            })?;
            upscale_similarity(map, sample.image.height(), sample.image.width())
        }
    }
}

/// Box around the top-percentile saliency of `prototype`: the region kept
/// intact by the completeness occlusion.
pub fn saliency_box(saliency: &Grid, percentile: f64) -> Result<BoundingBox> {
    bounding_box(&percentile_mask(saliency, percentile)?)
}

/// Occluded image of the completeness protocol for `(sample, prototype)`.
pub fn completeness_image(
    sample: &SampleBundle,
    prototype: usize,
    config: &SuiteConfig,
) -> Result<(Image, BoundingBox)> {
    let saliency = original_saliency(sample, prototype, config.saliency)?;
    let bbox = saliency_box(&saliency, config.perturbation.percentile)?;
    let mut rng = stream_rng(config.seed, &completeness_identity(&sample.id, prototype));
    let image = occlude_outside(
        &sample.image,
        &bbox,
        config.perturbation.occlusion_sigma,
        &mut rng,
    )?;
    Ok((image, bbox))
}

/// Photometrically perturbed image of the continuity protocol.
pub fn continuity_image(sample: &SampleBundle, config: &SuiteConfig) -> Result<Image> {
    let mut rng = stream_rng(config.seed, &continuity_identity(&sample.id));
    photometric_suite(&sample.image, &config.perturbation, &mut rng)
}

/// Model artifacts on a perturbed input.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedView {
    pub similarity_maps: Vec<Grid>,
    pub similarity_scores: Vec<f64>,
    pub output: Vec<f64>,
    /// Saliency of the prototype the perturbation was generated for (completeness only).
    pub saliency: Option<Grid>,
}

/// Obtains the artifacts for a perturbed input. When the perturbation left the
/// image unchanged the original artifacts are reused; otherwise they come from
/// the bundle's perturbed entries or the built-in toy backbone, depending on
/// the bundle's perturbed mode.
pub fn perturbed_view(
    bundle: &Bundle,
    sample: &SampleBundle,
    protocol: Protocol,
    prototype: Option<usize>,
    image: &Image,
    source: SaliencySource,
) -> Result<PerturbedView> {
    let mut view = if *image == sample.image {
        PerturbedView {
            similarity_maps: sample.similarity_maps.clone(),
            similarity_scores: sample.similarity_scores.clone(),
            output: sample.output.clone(),
            saliency: match (source, prototype) {
                (SaliencySource::Ingested, Some(p)) => sample.saliency_maps.get(&p).cloned(),
                _ => None,
            },
        }
    } else {
        match bundle.perturbed_mode {
            PerturbedMode::Synthetic => {
                let fm = sample.feature_map.as_ref().ok_or_else(|| {
                    Error::Validation("synthetic mode needs the original feature map".into())
                })?;
                let backbone = ToyBackbone::for_dims(
                    (sample.image.height(), sample.image.width()),
                    (fm.height(), fm.width()),
                )?;
                let forward = bundle.model.layer().forward(&backbone.features(image)?)?;
                PerturbedView {
                    similarity_maps: forward.similarity_maps,
                    similarity_scores: forward.similarity_scores,
                    output: forward.output,
                    saliency: Some(backbone.saliency(image)),
                }
            }
            mode => {
                let rec = sample
                    .perturbed_record(protocol, prototype)
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "no perturbed {protocol:?} entry for prototype {prototype:?}"
                        ))
                    })?;
                if mode == PerturbedMode::Regenerate {
                    let fm = rec.feature_map.as_ref().ok_or_else(|| {
                        Error::Validation("perturbed entry lacks a feature map".into())
                    })?;
                    let forward = bundle.model.layer().forward(fm)?;
                    PerturbedView {
                        similarity_maps: forward.similarity_maps,
                        similarity_scores: forward.similarity_scores,
                        output: forward.output,
                        saliency: rec.saliency_map.clone(),
                    }
                } else {
                    let missing =
                        || Error::Validation("perturbed entry lacks maps, scores or output".into());
                    PerturbedView {
                        similarity_maps: rec.similarity_maps.clone().ok_or_else(missing)?,
                        similarity_scores: rec.similarity_scores.clone().ok_or_else(missing)?,
                        output: rec.output.clone().ok_or_else(missing)?,
                        saliency: rec.saliency_map.clone(),
                    }
                }
            }
        }
    };
    if source == SaliencySource::Upscale {
        view.saliency = match prototype {
            Some(p) => {
                let map = view.similarity_maps.get(p).ok_or_else(|| {
                    Error::Validation(format!("no perturbed similarity map for prototype {p}"))
                })?;
                Some(upscale_similarity(
                    map,
                    sample.image.height(),
                    sample.image.width(),
                )?)
            }
            None => None,
        };
    }
    if view.similarity_maps.len() != sample.similarity_maps.len()
        || view.output.len() != sample.output.len()
    {
        return Err(Error::Shape(
            "perturbed artifacts do not match the original's shape".into(),
        ));
    }
    Ok(view)
}

/// One perturbed input the adapter has to run the model on.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPerturbation {
    pub sample_id: String,
    pub protocol: Protocol,
    pub prototype: Option<usize>,
    pub image: Image,
}

/// `(sample, prototype, reason)` of a perturbation that cannot be generated.
pub type PlanFailure = (String, Option<usize>, String);

/// Every perturbation the completeness and continuity suites will request,
/// plus the failures for any that cannot be generated.
pub fn plan_perturbations(
    bundle: &Bundle,
    config: &SuiteConfig,
) -> (Vec<PlannedPerturbation>, Vec<PlanFailure>) {
    use super::config::SuiteKind;
    let mut planned = Vec::new();
    let mut failed = Vec::new();
    for sample in &bundle.samples {
        if config.wants(SuiteKind::Completeness) {
            for p in top_k_prototypes(&sample.similarity_scores, config.top_k) {
                match completeness_image(sample, p, config) {
                    Ok((image, _)) => planned.push(PlannedPerturbation {
                        sample_id: sample.id.clone(),
                        protocol: Protocol::Completeness,
                        prototype: Some(p),
                        image,
                    }),
                    Err(e) => {
                        failed.push((sample.id.clone(), Some(p), format!("{}: {e}", e.kind())))
                    }
                }
            }
        }
        if config.wants(SuiteKind::Continuity) {
            match continuity_image(sample, config) {
                Ok(image) => planned.push(PlannedPerturbation {
                    sample_id: sample.id.clone(),
                    protocol: Protocol::Continuity,
                    prototype: None,
                    image,
                }),
                Err(e) => failed.push((sample.id.clone(), None, format!("{}: {e}", e.kind()))),
            }
        }
    }
    (planned, failed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationIndexEntry {
    pub sample: String,
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype: Option<usize>,
    /// Path of the `H × W × 3` image tensor, relative to the index file.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationIndex {
    pub dataset_name: String,
    pub seed: u64,
    pub config_hash: String,
    pub items: Vec<PerturbationIndexEntry>,
    #[serde(default)]
    pub failures: Vec<String>,
}

/// Writes planned images as tensors plus `perturbations.json` describing them.
pub fn write_perturbations(
    bundle: &Bundle,
    config: &SuiteConfig,
    dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let (planned, failed) = plan_perturbations(bundle, config);
    let mut items = Vec::with_capacity(planned.len());
    for (i, p) in planned.iter().enumerate() {
        let rel = format!("images/{i:06}.qpt");
        let img = &p.image;
        write_tensor(
            &Tensor::from_f64(vec![img.height(), img.width(), 3], img.values())?,
            dir.join(&rel),
        )?;
        items.push(PerturbationIndexEntry {
            sample: p.sample_id.clone(),
            protocol: p.protocol,
            prototype: p.prototype,
            image: rel,
        });
    }
    let index = PerturbationIndex {
        dataset_name: bundle.dataset_name.clone(),
        seed: config.seed,
        config_hash: config.hash(),
        items,
        failures: failed
            .into_iter()
            .map(|(s, p, reason)| match p {
                Some(p) => format!("{s}/{p}: {reason}"),
                None => format!("{s}: {reason}"),
            })
            .collect(),
    };
    let path = dir.join("perturbations.json");
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::PerturbationConfig;
    use crate::synthetic::{planted_bundle, FixtureSpec};

    fn small() -> Bundle {
        planted_bundle(&FixtureSpec {
            samples: 3,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn identity_perturbation_reuses_original_artifacts() {
        let b = small();
        let cfg = SuiteConfig {
            perturbation: PerturbationConfig::identity(),
            ..Default::default()
        };
        let s = &b.samples[0];
        let img = continuity_image(s, &cfg).unwrap();
        assert_eq!(img, s.image);
        let view = perturbed_view(&b, s, Protocol::Continuity, None, &img, cfg.saliency).unwrap();
        assert_eq!(view.similarity_scores, s.similarity_scores);
        assert_eq!(view.output, s.output);
    }

    #[test]
    fn completeness_keeps_the_box_intact() {
        let b = small();
        let cfg = SuiteConfig::default();
        let s = &b.samples[1];
        let (img, bbox) = completeness_image(s, 2, &cfg).unwrap();
        for r in 0..img.height() {
            for c in 0..img.width() {
                if bbox.contains(r, c) {
                    assert_eq!(img.pixel(r, c), s.image.pixel(r, c));
                }
            }
        }
        assert_ne!(img, s.image);
    }

    #[test]
    fn synthetic_mode_runs_the_toy_backbone() {
        let b = small();
        let cfg = SuiteConfig::default();
        let s = &b.samples[0];
        let img = continuity_image(s, &cfg).unwrap();
        let view = perturbed_view(&b, s, Protocol::Continuity, None, &img, cfg.saliency).unwrap();
        assert_eq!(view.similarity_maps.len(), 6);
        assert_ne!(view.similarity_scores, s.similarity_scores);
    }

    #[test]
    fn regenerate_mode_without_entries_fails_per_request() {
        let mut b = small();
        b.perturbed_mode = PerturbedMode::Regenerate;
        let cfg = SuiteConfig::default();
        let s = &b.samples[0];
        let img = continuity_image(s, &cfg).unwrap();
        assert!(perturbed_view(&b, s, Protocol::Continuity, None, &img, cfg.saliency).is_err());
    }

    #[test]
    fn upscale_source_replaces_saliency() {
        let b = small();
        let s = &b.samples[0];
        let sal = original_saliency(s, 0, SaliencySource::Upscale).unwrap();
        assert_eq!(sal.dims(), (s.image.height(), s.image.width()));
    }

    #[test]
    fn plan_and_write_index() {
        let b = small();
        let cfg = SuiteConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = write_perturbations(&b, &cfg, dir.path()).unwrap();
        let index: PerturbationIndex =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        // top-5 completeness images plus one continuity image per sample
        assert_eq!(index.items.len(), 3 * 6);
        let first =
            crate::interchange::read_tensor(dir.path().join(&index.items[0].image)).unwrap();
        assert_eq!(first.dims(), &[32, 32, 3]);
    }
}
