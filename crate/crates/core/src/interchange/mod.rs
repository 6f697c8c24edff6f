//! Artifact interchange: the `QPT1` tensor container, the JSON manifest and
//! validated in-memory bundles.

mod bundle;
mod manifest;
mod tensor;

pub use bundle::{
    load_bundle, load_unvalidated, observed_parts, write_bundle, Bundle, ModelBundle,
    PerturbedRecord, SampleBundle, Violation, REGENERATION_TOLERANCE, SCORE_TOLERANCE,
};
pub use manifest::{
    Manifest, ModelEntry, PartPoint, PerturbedEntry, PerturbedMode, Protocol, SaliencyEntry,
    SampleEntry,
};
pub use tensor::{read_tensor, write_tensor, Tensor, MAGIC, MAX_RANK};
