//! JSON manifest schema. All paths are relative to the manifest's directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset_name: String,
    pub class_count: usize,
    #[serde(default)]
    pub multilabel: bool,
    #[serde(default)]
    pub part_vocabulary: Vec<u32>,
    #[serde(default)]
    pub perturbed_mode: PerturbedMode,
    pub model: ModelEntry,
    pub samples: Vec<SampleEntry>,
}

/// How perturbed-side artifacts are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbedMode {
    /// Entries carry perturbed feature maps; the engine reruns the prototype layer.
    #[default]
    Regenerate,
    /// Entries carry similarity maps, scores and outputs directly.
    Bundle,
    /// Perturbed images are pushed through the built-in toy backbone.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototypes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_assignment: Option<String>,
    pub classifier_weights: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_of_prototype: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_map: Option<String>,
    pub similarity_maps: String,
    pub similarity_scores: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub saliency_maps: Vec<SaliencyEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<PartPoint>,
    pub labels: Vec<usize>,
    pub output: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbed: Vec<PerturbedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaliencyEntry {
    pub prototype: usize,
    pub path: String,
}

/// An annotated object part location in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartPoint {
    pub part_id: u32,
    pub row: f64,
    pub col: f64,
    #[serde(default = "default_true")]
    pub visible: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Completeness,
    Continuity,
}

/// Artifacts of one perturbed input. Completeness entries name the prototype
/// whose visualization drove the perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbedEntry {
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_map: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_maps: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_scores: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Saliency of the driving prototype (completeness) on the perturbed input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency_map: Option<String>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Manifest(format!("invalid manifest JSON: {e}")))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::from_json(&text).map_err(|e| match e {
            Error::Manifest(msg) => Error::Manifest(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_manifest() {
        let m = Manifest::from_json(
            r#"{
                "dataset_name": "toy",
                "class_count": 2,
                "model": {"kind": "indirect", "classifier_weights": "w.qpt"},
                "samples": [{
                    "id": "a", "image": "a/img.qpt",
                    "similarity_maps": "a/maps.qpt", "similarity_scores": "a/s.qpt",
                    "labels": [1], "output": "a/o.qpt",
                    "parts": [{"part_id": 3, "row": 1.5, "col": 2.0}]
                }]
            }"#,
        )
        .unwrap();
        assert_eq!(m.model.kind, ModelKind::Indirect);
        assert_eq!(m.perturbed_mode, PerturbedMode::Regenerate);
        assert!(m.samples[0].parts[0].visible);
        let back = Manifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_kinds() {
        assert!(Manifest::from_json(r#"{"dataset_name": "x"}"#).is_err());
        let bad = r#"{"dataset_name": "t", "class_count": 2, "bogus": 1,
            "model": {"kind": "indirect", "classifier_weights": "w"}, "samples": []}"#;
        assert!(matches!(Manifest::from_json(bad), Err(Error::Manifest(_))));
        let bad_kind = r#"{"dataset_name": "t", "class_count": 2,
            "model": {"kind": "hybrid", "classifier_weights": "w"}, "samples": []}"#;
        assert!(Manifest::from_json(bad_kind).is_err());
    }
}
