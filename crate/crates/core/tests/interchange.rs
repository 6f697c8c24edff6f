//! On-disk interchange: golden tensor files, bundle round trips and planted
//! invariant violations.

use std::fs;
use std::path::{Path, PathBuf};

use protoeval::interchange::{
    load_bundle, load_unvalidated, read_tensor, write_bundle, write_tensor, Bundle, Manifest,
    PerturbedMode, Tensor,
};
use protoeval::kernel::{ModelKind, SlotAssignment};
use protoeval::pipeline::SuiteConfig;
use protoeval::synthetic::{attach_perturbed_records, planted_bundle, FixtureSpec};
use protoeval::{Error, Grid};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn small_bundle() -> Bundle {
    planted_bundle(&FixtureSpec {
        samples: 3,
        ..Default::default()
    })
    .unwrap()
}

/// Writes `tensor` to a scratch file and returns the bytes on disk.
fn written_bytes(tensor: &Tensor) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.qpt");
    write_tensor(tensor, &path).unwrap();
    fs::read(path).unwrap()
}

#[test]
fn writer_reproduces_golden_files() {
    let cases = [
        ("scalar_zero.qpt", Tensor::new(vec![1], vec![0.0]).unwrap()),
        (
            "identity_2x2.qpt",
            Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        ),
        (
            "vector_3.qpt",
            Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(),
        ),
        (
            "ramp_2x3x2.qpt",
            Tensor::new(
                vec![2, 3, 2],
                (0..12).map(|i| i as f32 * 0.5 - 1.0).collect(),
            )
            .unwrap(),
        ),
    ];
    for (name, tensor) in cases {
        let expected = fs::read(golden(name)).unwrap();
        assert_eq!(written_bytes(&tensor), expected, "{name}");
        assert_eq!(read_tensor(golden(name)).unwrap(), tensor, "{name}");
    }
}

#[test]
fn golden_sizes_follow_the_length_formula() {
    // magic + rank + 4 bytes per dim + 4 bytes per value
    assert_eq!(
        fs::read(golden("scalar_zero.qpt")).unwrap().len(),
        4 + 4 + 4 + 4
    );
    assert_eq!(
        fs::read(golden("identity_2x2.qpt")).unwrap().len(),
        4 + 4 + 8 + 16
    );
    assert_eq!(
        fs::read(golden("ramp_2x3x2.qpt")).unwrap().len(),
        4 + 4 + 12 + 48
    );
}

#[test]
fn corrupted_files_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = fs::read(golden("identity_2x2.qpt")).unwrap();
    bytes[3] = b'X';
    let bad_magic = dir.path().join("magic.qpt");
    fs::write(&bad_magic, &bytes).unwrap();
    assert!(matches!(read_tensor(&bad_magic), Err(Error::Format(_))));

    let good = fs::read(golden("identity_2x2.qpt")).unwrap();
    let truncated = dir.path().join("short.qpt");
    fs::write(&truncated, &good[..good.len() - 1]).unwrap();
    assert!(matches!(read_tensor(&truncated), Err(Error::Format(_))));

    assert!(matches!(
        read_tensor(dir.path().join("absent.qpt")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn bundle_round_trip_is_stable() {
    for mode in [
        PerturbedMode::Synthetic,
        PerturbedMode::Regenerate,
        PerturbedMode::Bundle,
    ] {
        let mut bundle = small_bundle();
        attach_perturbed_records(&mut bundle, &SuiteConfig::default(), mode).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let first = load_bundle(write_bundle(&bundle, dir.path().join("a")).unwrap()).unwrap();
        assert_eq!(first.samples.len(), 3);
        assert_eq!(first.perturbed_mode, mode);
        // values pass through f32 once; after that the round trip is exact
        let second = load_bundle(write_bundle(&first, dir.path().join("b")).unwrap()).unwrap();
        assert_eq!(first, second);
    }
}

#[test]
fn single_sample_manifest_loads() {
    let mut bundle = small_bundle();
    bundle.samples.truncate(1);
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_bundle(write_bundle(&bundle, dir.path()).unwrap()).unwrap();
    assert_eq!(loaded.samples.len(), 1);
}

#[test]
fn planted_score_mismatch_names_the_sample() {
    let mut bundle = small_bundle();
    bundle.samples[1].similarity_scores[2] += 0.1;
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_bundle(&bundle, dir.path()).unwrap();
    let err = load_bundle(&manifest).unwrap_err();
    let Error::Validation(msg) = err else {
        panic!("expected validation error, got {err:?}")
    };
    assert!(msg.contains("planted-001"), "{msg}");
    assert!(msg.contains("similarity score 2"), "{msg}");
    // the unvalidated loader still reads it, and reports exactly one violation
    let violations = load_unvalidated(&manifest).unwrap().violations();
    assert_eq!(violations.len(), 1, "{violations:?}");
    assert_eq!(violations[0].sample_id.as_deref(), Some("planted-001"));
}

#[test]
fn planted_slot_distribution_is_rejected() {
    let mut bundle = small_bundle();
    let classes = bundle.class_count;
    let n = bundle.model.prototype_count();
    // one slot per class, every distribution sums to 0.8
    let data: Vec<f64> = (0..classes)
        .flat_map(|_| (0..n).map(|m| if m == 0 { 0.8 } else { 0.0 }))
        .collect();
    bundle.model.kind = ModelKind::ExplicitShared;
    bundle.model.class_of_prototype = None;
    bundle.model.slot_assignment = Some(SlotAssignment::new(classes, 1, n, data).unwrap());
    bundle.model.classifier_weights = Grid::filled(classes, 1, 1.0);
    let msg = bundle.validate().unwrap_err().to_string();
    assert!(msg.contains("sums to 0.8"), "{msg}");
}

#[test]
fn missing_referenced_file_is_a_manifest_error() {
    let bundle = small_bundle();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_bundle(&bundle, dir.path()).unwrap();
    let parsed = Manifest::read(&manifest).unwrap();
    let image = dir.path().join(&parsed.samples[0].image);
    fs::remove_file(image).unwrap();
    assert!(matches!(load_bundle(&manifest), Err(Error::Manifest(_))));
}

#[test]
fn class_count_below_two_is_rejected() {
    let mut bundle = small_bundle();
    bundle.class_count = 1;
    assert!(bundle
        .violations()
        .iter()
        .any(|v| v.message.contains("class_count")));
}
