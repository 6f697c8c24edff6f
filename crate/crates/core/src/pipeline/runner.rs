//! Suite execution: per-sample work runs on a dedicated thread pool and is
//! folded into the report in sample order, so results never depend on the
//! degree of parallelism.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::config::{SuiteConfig, SuiteKind};
use super::perturbed::{
    completeness_image, continuity_image, original_saliency, perturbed_view, saliency_box,
};
use super::report::{MetricReport, ReportBuilder, RunGrouping, RunMetadata, Skip};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interchange::{Bundle, PerturbedMode, Protocol, SampleBundle};
use crate::metrics::{
    activation_entropy, background_overlap, cac, consistency, crc, global_size, iord, local_size,
    mean_cosine_distance_inter, mean_cosine_distance_intra, npr, object_overlap, pac,
    pairwise_palc_contra, pairwise_plc_contra, palc, performance, plc, prc, psc, rank_of, sparsity,
    top_k_prototypes, vac, vlc, ClassVectorSets, Member, PartHistogram,
};
use crate::perturb::{percentile_mask, PerturbationConfig};

const COMPLETENESS: [&str; 6] = [
    "completeness.vlc",
    "completeness.vac",
    "completeness.plc",
    "completeness.psc",
    "completeness.palc",
    "completeness.pac",
];
const CONTINUITY_PROTO: [&str; 5] = [
    "continuity.plc",
    "continuity.psc",
    "continuity.palc",
    "continuity.pac",
    "continuity.prc",
];
const CONTINUITY_SAMPLE: [&str; 2] = ["continuity.cac", "continuity.crc"];
const COMPLEXITY_MASK: [&str; 3] = [
    "complexity.object_overlap",
    "complexity.background_overlap",
    "complexity.iord",
];

/// One per-entity outcome produced by a worker.
#[derive(Debug)]
struct Row {
    metric: &'static str,
    entity: String,
    outcome: std::result::Result<f64, String>,
}

impl Row {
    fn new(metric: &'static str, entity: &str, result: Result<f64>) -> Self {
        Row {
            metric,
            entity: entity.to_string(),
            outcome: result.map_err(|e| format!("{}: {e}", e.kind())),
        }
    }

    fn skipped(metric: &'static str, entity: &str, reason: &str) -> Self {
        Row {
            metric,
            entity: entity.to_string(),
            outcome: Err(reason.to_string()),
        }
    }
}

fn reason(e: &Error) -> String {
    format!("{}: {e}", e.kind())
}

fn push_rows(builder: &mut ReportBuilder, suite: SuiteKind, rows: Vec<Row>) {
    for row in rows {
        match row.outcome {
            Ok(v) => builder.record(row.metric, suite, row.entity, Ok(v)),
            Err(reason) => builder.skip(
                row.metric,
                suite,
                Skip {
                    entity: row.entity,
                    reason,
                },
            ),
        }
    }
}

fn is_identity(p: &PerturbationConfig) -> bool {
    p.brightness == 0.0
        && p.contrast == 0.0
        && p.saturation == 0.0
        && p.hue_shift == 0.0
        && p.noise_sigma == 0.0
        && p.jpeg_quality.is_none()
        && p.blur_kernel <= 1
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Fails when a requested suite cannot produce a single entity.
fn check_requirements(bundle: &Bundle, config: &SuiteConfig) -> Result<()> {
    let needs_records = bundle.perturbed_mode != PerturbedMode::Synthetic;
    let has_records = |protocol: Protocol| {
        bundle
            .samples
            .iter()
            .any(|s| s.perturbed.iter().any(|r| r.protocol == protocol))
    };
    if config.wants(SuiteKind::Completeness) {
        if config.saliency == super::config::SaliencySource::Ingested
            && bundle.samples.iter().all(|s| s.saliency_maps.is_empty())
        {
            return Err(Error::Suite(
                "completeness needs saliency maps; the bundle has none".into(),
            ));
        }
        if needs_records
            && config.perturbation.occlusion_sigma > 0.0
            && !has_records(Protocol::Completeness)
        {
            return Err(Error::Suite(
                "completeness needs perturbed completeness entries; the bundle has none".into(),
            ));
        }
    }
    if config.wants(SuiteKind::Continuity)
        && needs_records
        && !is_identity(&config.perturbation)
        && !has_records(Protocol::Continuity)
    {
        return Err(Error::Suite(
            "continuity needs perturbed continuity entries; the bundle has none".into(),
        ));
    }
    if config.wants(SuiteKind::Complexity)
        && bundle
            .samples
            .iter()
            .all(|s| s.object_mask.is_none() && s.parts.is_empty())
    {
        return Err(Error::Suite(
            "complexity needs object masks or part annotations".into(),
        ));
    }
    if bundle.samples.is_empty() {
        return Err(Error::Suite("bundle has no samples".into()));
    }
    Ok(())
}

/// Runs every suite requested by `config` over the bundle.
pub fn run_suites(bundle: &Bundle, config: &SuiteConfig) -> Result<MetricReport> {
    config.validate()?;
    check_requirements(bundle, config)?;
    let started_at = unix_now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.unwrap_or(1))
        .build()
        .map_err(|e| Error::Suite(format!("cannot start worker pool: {e}")))?;

    let mut builder = ReportBuilder::default();
    let mut notes = Vec::new();
    let n = bundle.model.prototype_count();
    if n < config.top_k {
        notes.push(format!(
            "model has {n} prototypes, fewer than top_k = {}; all prototypes are evaluated",
            config.top_k
        ));
    }
    let mut suites: Vec<SuiteKind> = config.suites.clone();
    suites.sort();
    suites.dedup();

    for &suite in &suites {
        match suite {
            SuiteKind::Completeness => {
                let rows = pool.install(|| {
                    bundle
                        .samples
                        .par_iter()
                        .map(|s| completeness_rows(bundle, s, config))
                        .collect::<Vec<_>>()
                });
                for name in COMPLETENESS {
                    builder.declare(name, suite);
                }
                push_rows(&mut builder, suite, rows.into_iter().flatten().collect());
            }
            SuiteKind::Continuity => {
                let rows = pool.install(|| {
                    bundle
                        .samples
                        .par_iter()
                        .map(|s| continuity_rows(bundle, s, config))
                        .collect::<Vec<_>>()
                });
                for name in CONTINUITY_PROTO.into_iter().chain(CONTINUITY_SAMPLE) {
                    builder.declare(name, suite);
                }
                push_rows(&mut builder, suite, rows.into_iter().flatten().collect());
            }
            SuiteKind::Contrastivity => {
                let rows = pool.install(|| {
                    bundle
                        .samples
                        .par_iter()
                        .map(|s| contrast_rows(s, config))
                        .collect::<Vec<_>>()
                });
                builder.declare("contrastivity.plc_contra", suite);
                builder.declare("contrastivity.palc_contra", suite);
                push_rows(&mut builder, suite, rows.into_iter().flatten().collect());
                contrastivity_global(bundle, config, &mut builder);
            }
            SuiteKind::Complexity => {
                let results = pool.install(|| {
                    bundle
                        .samples
                        .par_iter()
                        .map(|s| complexity_rows(s, config))
                        .collect::<Vec<_>>()
                });
                for name in COMPLEXITY_MASK {
                    builder.declare(name, suite);
                }
                builder.declare("complexity.consistency", suite);
                let mut histograms: BTreeMap<usize, PartHistogram> = BTreeMap::new();
                let mut rows = Vec::new();
                for (sample_rows, covered) in results {
                    rows.extend(sample_rows);
                    for (p, parts) in covered {
                        histograms.entry(p).or_default().record_image(parts);
                    }
                }
                push_rows(&mut builder, suite, rows);
                if bundle.part_vocabulary.is_empty() {
                    builder.not_applicable(
                        "complexity.consistency",
                        suite,
                        "bundle declares no part vocabulary",
                    );
                } else {
                    for (p, hist) in &histograms {
                        builder.record(
                            "complexity.consistency",
                            suite,
                            format!("p{p}"),
                            consistency(hist, &bundle.part_vocabulary),
                        );
                    }
                }
            }
            SuiteKind::Compactness => compactness(bundle, config, &mut builder, &pool),
            SuiteKind::Performance => {
                let outputs: Vec<Vec<f64>> =
                    bundle.samples.iter().map(|s| s.output.clone()).collect();
                let labels: Vec<Vec<usize>> =
                    bundle.samples.iter().map(|s| s.labels.clone()).collect();
                match performance(
                    &outputs,
                    &labels,
                    bundle.multilabel,
                    config.accuracy_top_k,
                    config.multilabel_threshold,
                ) {
                    Ok(p) => {
                        builder.value("performance.accuracy", suite, "model", p.accuracy);
                        builder.value("performance.f1", suite, "model", p.f1);
                        match p.topk_accuracy {
                            Some(v) => {
                                builder.value("performance.topk_accuracy", suite, "model", v)
                            }
                            None => builder.not_applicable(
                                "performance.topk_accuracy",
                                suite,
                                "top-k accuracy is not defined for multi-label data",
                            ),
                        }
                    }
                    Err(e) => {
                        for name in [
                            "performance.accuracy",
                            "performance.topk_accuracy",
                            "performance.f1",
                        ] {
                            builder.skip(name, suite, Skip::from_error("model", &e));
                        }
                    }
                }
            }
        }
    }

    let metadata = RunMetadata {
        dataset: bundle.dataset_name.clone(),
        model_kind: serde_json::to_value(bundle.model.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        suites,
        config_hash: config.hash(),
        seed: config.seed,
        sample_count: bundle.samples.len(),
        grouping: RunGrouping::SingleRun,
        runs: Vec::new(),
        notes,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: unix_now(),
    };
    Ok(builder.finish(metadata))
}

/// Runs a single suite.
pub fn run_suite(bundle: &Bundle, suite: SuiteKind, config: &SuiteConfig) -> Result<MetricReport> {
    let cfg = SuiteConfig {
        suites: vec![suite],
        ..config.clone()
    };
    run_suites(bundle, &cfg)
}

fn completeness_rows(bundle: &Bundle, sample: &SampleBundle, config: &SuiteConfig) -> Vec<Row> {
    let mut rows = Vec::new();
    let pct = config.perturbation.percentile;
    for p in top_k_prototypes(&sample.similarity_scores, config.top_k) {
        let entity = format!("{}/p{p}", sample.id);
        let prepared = completeness_image(sample, p, config).and_then(|(image, bbox)| {
            let view = perturbed_view(
                bundle,
                sample,
                Protocol::Completeness,
                Some(p),
                &image,
                config.saliency,
            )?;
            let saliency = original_saliency(sample, p, config.saliency)?;
            Ok((bbox, view, saliency))
        });
        let (bbox, view, saliency) = match prepared {
            Ok(x) => x,
            Err(e) => {
                let why = reason(&e);
                rows.extend(COMPLETENESS.iter().map(|m| Row::skipped(m, &entity, &why)));
                continue;
            }
        };
        let (map, pmap) = (&sample.similarity_maps[p], &view.similarity_maps[p]);
        match &view.saliency {
            Some(ps) => {
                rows.push(Row::new(
                    COMPLETENESS[0],
                    &entity,
                    saliency_box(ps, pct).map(|b| vlc(&bbox, &b)),
                ));
                rows.push(Row::new(COMPLETENESS[1], &entity, vac(&saliency, ps)));
            }
            None => {
                for m in &COMPLETENESS[..2] {
                    rows.push(Row::skipped(
                        m,
                        &entity,
                        "validation: no saliency map for the perturbed input",
                    ));
                }
            }
        }
        rows.push(Row::new(COMPLETENESS[2], &entity, plc(map, pmap)));
        rows.push(Row::new(
            COMPLETENESS[3],
            &entity,
            psc(sample.similarity_scores[p], view.similarity_scores[p]),
        ));
        rows.push(Row::new(COMPLETENESS[4], &entity, palc(map, pmap)));
        rows.push(Row::new(COMPLETENESS[5], &entity, pac(map, pmap)));
    }
    rows
}

fn continuity_rows(bundle: &Bundle, sample: &SampleBundle, config: &SuiteConfig) -> Vec<Row> {
    let mut rows = Vec::new();
    let top = top_k_prototypes(&sample.similarity_scores, config.top_k);
    let view = continuity_image(sample, config).and_then(|img| {
        perturbed_view(
            bundle,
            sample,
            Protocol::Continuity,
            None,
            &img,
            config.saliency,
        )
    });
    let view = match view {
        Ok(v) => v,
        Err(e) => {
            let why = reason(&e);
            for p in &top {
                let entity = format!("{}/p{p}", sample.id);
                rows.extend(
                    CONTINUITY_PROTO
                        .iter()
                        .map(|m| Row::skipped(m, &entity, &why)),
                );
            }
            rows.extend(
                CONTINUITY_SAMPLE
                    .iter()
                    .map(|m| Row::skipped(m, &sample.id, &why)),
            );
            return rows;
        }
    };
    for p in top {
        let entity = format!("{}/p{p}", sample.id);
        let (map, pmap) = (&sample.similarity_maps[p], &view.similarity_maps[p]);
        rows.push(Row::new(CONTINUITY_PROTO[0], &entity, plc(map, pmap)));
        rows.push(Row::new(
            CONTINUITY_PROTO[1],
            &entity,
            psc(sample.similarity_scores[p], view.similarity_scores[p]),
        ));
        rows.push(Row::new(CONTINUITY_PROTO[2], &entity, palc(map, pmap)));
        rows.push(Row::new(CONTINUITY_PROTO[3], &entity, pac(map, pmap)));
        let change = prc(
            rank_of(&sample.similarity_scores, p),
            rank_of(&view.similarity_scores, p),
        );
        rows.push(Row::new(CONTINUITY_PROTO[4], &entity, Ok(change as f64)));
    }
    rows.push(Row::new(
        CONTINUITY_SAMPLE[0],
        &sample.id,
        cac(&sample.output, &view.output),
    ));
    rows.push(Row::new(
        CONTINUITY_SAMPLE[1],
        &sample.id,
        crc(&sample.output, &view.output).map(|c| c as f64),
    ));
    rows
}

fn top_maps<'a>(sample: &'a SampleBundle, config: &SuiteConfig) -> Vec<&'a Grid> {
    top_k_prototypes(&sample.similarity_scores, config.top_k)
        .into_iter()
        .map(|p| &sample.similarity_maps[p])
        .collect()
}

fn contrast_rows(sample: &SampleBundle, config: &SuiteConfig) -> Vec<Row> {
    let maps = top_maps(sample, config);
    vec![
        Row::new(
            "contrastivity.plc_contra",
            &sample.id,
            pairwise_plc_contra(&maps),
        ),
        Row::new(
            "contrastivity.palc_contra",
            &sample.id,
            pairwise_palc_contra(&maps),
        ),
    ]
}

fn record_set_distances(
    builder: &mut ReportBuilder,
    inter: &'static str,
    intra: &'static str,
    sets: &ClassVectorSets,
) {
    let suite = SuiteKind::Contrastivity;
    builder.record(inter, suite, "model", mean_cosine_distance_inter(sets));
    match mean_cosine_distance_intra(sets) {
        Ok(r) => {
            for k in r.skipped_classes {
                builder.skip(
                    intra,
                    suite,
                    Skip {
                        entity: format!("class:{k}"),
                        reason: "skipped-class: fewer than two members".into(),
                    },
                );
            }
            match r.value {
                Some(v) => builder.value(intra, suite, "model", v),
                None => builder.skip(
                    intra,
                    suite,
                    Skip {
                        entity: "model".into(),
                        reason: "skipped-class: no class has two members".into(),
                    },
                ),
            }
        }
        Err(e) => builder.skip(intra, suite, Skip::from_error("model", &e)),
    }
}

fn contrastivity_global(bundle: &Bundle, config: &SuiteConfig, builder: &mut ReportBuilder) {
    let suite = SuiteKind::Contrastivity;
    let tops: Vec<Vec<usize>> = bundle
        .samples
        .iter()
        .map(|s| top_k_prototypes(&s.similarity_scores, config.top_k))
        .collect();

    // activation entropy of every prototype that is ever among the most activated
    builder.declare("contrastivity.entropy", suite);
    let active: BTreeSet<usize> = tops.iter().flatten().copied().collect();
    for p in active {
        let series: Vec<f64> = bundle
            .samples
            .iter()
            .map(|s| s.similarity_scores[p])
            .collect();
        builder.record(
            "contrastivity.entropy",
            suite,
            format!("p{p}"),
            activation_entropy(&series, config.entropy_bins),
        );
    }

    let k = bundle.class_count;
    // prototype sets: union of the top prototypes of every sample of the class
    builder.declare("contrastivity.apd_inter", suite);
    builder.declare("contrastivity.apd_intra", suite);
    match &bundle.model.prototypes {
        None => {
            for name in ["contrastivity.apd_inter", "contrastivity.apd_intra"] {
                builder.not_applicable(name, suite, "model has no prototype vectors");
            }
        }
        Some(protos) => {
            let mut per_class: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
            for (s, top) in bundle.samples.iter().zip(&tops) {
                for &label in &s.labels {
                    per_class[label].extend(top.iter().copied());
                }
            }
            let sets = ClassVectorSets::new(
                per_class
                    .into_iter()
                    .filter(|set| !set.is_empty())
                    .map(|set| {
                        set.into_iter()
                            .map(|p| Member {
                                key: p,
                                vector: protos[p].clone(),
                            })
                            .collect()
                    })
                    .collect(),
            );
            record_set_distances(
                builder,
                "contrastivity.apd_inter",
                "contrastivity.apd_intra",
                &sets,
            );
        }
    }

    // feature sets: feature vector at the peak of each top prototype's map
    builder.declare("contrastivity.afd_inter", suite);
    builder.declare("contrastivity.afd_intra", suite);
    let n = bundle.model.prototype_count();
    let mut per_class: Vec<Vec<Member>> = vec![Vec::new(); k];
    for (i, (s, top)) in bundle.samples.iter().zip(&tops).enumerate() {
        let Some(fm) = &s.feature_map else {
            builder.skip(
                "contrastivity.afd_inter",
                suite,
                Skip {
                    entity: s.id.clone(),
                    reason: "validation: sample has no feature map".into(),
                },
            );
            continue;
        };
        for &p in top {
            let (r, c) = s.similarity_maps[p].argmax();
            let vector = fm.cell(r, c).to_vec();
            if vector.iter().all(|&v| v == 0.0) {
                builder.skip(
                    "contrastivity.afd_inter",
                    suite,
                    Skip {
                        entity: format!("{}/p{p}", s.id),
                        reason: "validation: nearest feature vector has zero norm".into(),
                    },
                );
                continue;
            }
            for &label in &s.labels {
                per_class[label].push(Member {
                    key: i * n + p,
                    vector: vector.clone(),
                });
            }
        }
    }
    let sets = ClassVectorSets::new(per_class.into_iter().filter(|m| !m.is_empty()).collect());
    if sets.class_count() == 0 {
        for name in ["contrastivity.afd_inter", "contrastivity.afd_intra"] {
            builder.skip(
                name,
                suite,
                Skip {
                    entity: "model".into(),
                    reason: "validation: no feature vectors available".into(),
                },
            );
        }
    } else {
        record_set_distances(
            builder,
            "contrastivity.afd_inter",
            "contrastivity.afd_intra",
            &sets,
        );
    }
}

type Coverage = Vec<(usize, Vec<u32>)>;

fn complexity_rows(sample: &SampleBundle, config: &SuiteConfig) -> (Vec<Row>, Coverage) {
    let mut rows = Vec::new();
    let mut covered = Vec::new();
    let pct = config.perturbation.percentile;
    for p in top_k_prototypes(&sample.similarity_scores, config.top_k) {
        let entity = format!("{}/p{p}", sample.id);
        let saliency = match original_saliency(sample, p, config.saliency) {
            Ok(s) => s,
            Err(e) => {
                let why = reason(&e);
                rows.extend(
                    COMPLEXITY_MASK
                        .iter()
                        .map(|m| Row::skipped(m, &entity, &why)),
                );
                continue;
            }
        };
        match &sample.object_mask {
            Some(object) => match percentile_mask(&saliency, pct) {
                Ok(v) => {
                    rows.push(Row::new(
                        COMPLEXITY_MASK[0],
                        &entity,
                        object_overlap(&v, object),
                    ));
                    rows.push(Row::new(
                        COMPLEXITY_MASK[1],
                        &entity,
                        background_overlap(&v, object),
                    ));
                    rows.push(Row::new(
                        COMPLEXITY_MASK[2],
                        &entity,
                        iord(&saliency, object),
                    ));
                }
                Err(e) => {
                    let why = reason(&e);
                    rows.extend(
                        COMPLEXITY_MASK[..2]
                            .iter()
                            .map(|m| Row::skipped(m, &entity, &why)),
                    );
                    rows.push(Row::new(
                        COMPLEXITY_MASK[2],
                        &entity,
                        iord(&saliency, object),
                    ));
                }
            },
            None => {
                rows.extend(
                    COMPLEXITY_MASK
                        .iter()
                        .map(|m| Row::skipped(m, &entity, "validation: sample has no object mask")),
                );
            }
        }
        if !sample.parts.is_empty() {
            if let Ok(bbox) = saliency_box(&saliency, pct) {
                let parts = sample
                    .parts
                    .iter()
                    .filter(|part| part.visible && bbox.contains_point(part.row, part.col))
                    .map(|part| part.part_id)
                    .collect();
                covered.push((p, parts));
            }
        }
    }
    (rows, covered)
}

fn compactness(
    bundle: &Bundle,
    config: &SuiteConfig,
    builder: &mut ReportBuilder,
    pool: &rayon::ThreadPool,
) {
    let suite = SuiteKind::Compactness;
    let w = &bundle.model.classifier_weights;
    builder.record(
        "compactness.global_size",
        suite,
        "model",
        global_size(&bundle.model.prototype_presence(), config.epsilon).map(|v| v as f64),
    );
    builder.record(
        "compactness.sparsity",
        suite,
        "model",
        sparsity(w, config.epsilon),
    );
    builder.declare("compactness.npr", suite);
    match npr(w, config.epsilon) {
        Ok(Some(v)) => builder.value("compactness.npr", suite, "model", v),
        Ok(None) => builder.skip(
            "compactness.npr",
            suite,
            Skip {
                entity: "model".into(),
                reason: "undefined: negative weights but no positive weight".into(),
            },
        ),
        Err(e) => builder.skip("compactness.npr", suite, Skip::from_error("model", &e)),
    }
    let rows = pool.install(|| {
        bundle
            .samples
            .par_iter()
            .map(|s| {
                Row::new(
                    "compactness.local_size",
                    &s.id,
                    local_size(&s.similarity_scores, config.mu).map(|v| v as f64),
                )
            })
            .collect::<Vec<_>>()
    });
    builder.declare("compactness.local_size", suite);
    push_rows(builder, suite, rows);
}
