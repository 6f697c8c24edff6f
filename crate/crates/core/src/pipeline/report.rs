use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SuiteKind;
use crate::error::{Error, Result};

/// Mean and population (divisor `N`) standard deviation.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Validation(
            "cannot aggregate an empty value list".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityValue {
    pub entity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub entity: String,
    pub reason: String,
}

impl Skip {
    pub fn from_error(entity: impl Into<String>, err: &Error) -> Self {
        Skip {
            entity: entity.into(),
            reason: format!("{}: {err}", err.kind()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub suite: SuiteKind,
    pub values: Vec<EntityValue>,
    /// Absent when no entity produced a value.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub skipped: Vec<Skip>,
    /// Set when the metric does not apply to this model at all.
    pub not_applicable: Option<String>,
}

impl MetricEntry {
    fn new(suite: SuiteKind) -> Self {
        MetricEntry {
            suite,
            values: Vec::new(),
            mean: None,
            std: None,
            skipped: Vec::new(),
            not_applicable: None,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.values.len() + self.skipped.len()
    }

    fn finalize(&mut self) {
        let vals: Vec<f64> = self.values.iter().map(|v| v.value).collect();
        match aggregate(&vals) {
            Ok((m, s)) => {
                self.mean = Some(m);
                self.std = Some(s);
            }
            Err(_) => {
                self.mean = None;
                self.std = None;
            }
        }
    }
}

/// How the runs behind a combined report were grouped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunGrouping {
    #[default]
    SingleRun,
    Folds,
    Seeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dataset: String,
    pub model_kind: String,
    pub suites: Vec<SuiteKind>,
    pub config_hash: String,
    pub seed: u64,
    pub sample_count: usize,
    pub grouping: RunGrouping,
    /// Labels of the runs combined into this report (empty for a single run).
    pub runs: Vec<String>,
    pub notes: Vec<String>,
    pub engine_version: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metadata: RunMetadata,
    pub metrics: BTreeMap<String, MetricEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Usage(format!(
                "unknown report format `{other}` (json, csv, svg)"
            ))),
        }
    }
}

impl MetricReport {
    /// Pretty JSON with keys in sorted order at every level.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid metric report: {e}")))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// One row per entity (values and skips) after a header row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(format!("csv emission failed: {e}"));
        w.write_record(["metric", "suite", "entity", "status", "value", "reason"])
            .map_err(csv_err)?;
        for (name, entry) in &self.metrics {
            for v in &entry.values {
                w.write_record([
                    name.as_str(),
                    entry.suite.name(),
                    &v.entity,
                    "ok",
                    &v.value.to_string(),
                    "",
                ])
                .map_err(csv_err)?;
            }
            for s in &entry.skipped {
                w.write_record([
                    name.as_str(),
                    entry.suite.name(),
                    &s.entity,
                    "skipped",
                    "",
                    &s.reason,
                ])
                .map_err(csv_err)?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Format(format!("csv emission failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Copy with timestamps cleared, for run-to-run comparison.
    pub fn without_timestamps(&self) -> MetricReport {
        let mut r = self.clone();
        r.metadata.started_at = 0;
        r.metadata.finished_at = 0;
        r
    }

    /// Checks every stored mean/std against a recomputation from the values.
    pub fn check_aggregates(&self, tolerance: f64) -> Result<()> {
        for (name, entry) in &self.metrics {
            let vals: Vec<f64> = entry.values.iter().map(|v| v.value).collect();
            let expected = aggregate(&vals).ok();
            let ok = match (expected, entry.mean, entry.std) {
                (None, None, None) => true,
                (Some((m, s)), Some(em), Some(es)) => {
                    (m - em).abs() <= tolerance && (s - es).abs() <= tolerance
                }
                _ => false,
            };
            if !ok {
                return Err(Error::Validation(format!(
                    "aggregates of {name} do not match its values"
                )));
            }
        }
        Ok(())
    }

    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).and_then(|m| m.mean)
    }
}

/// Combines several runs: each metric's per-run means become the entities of
/// the combined report, so its mean ± std is taken across runs.
pub fn combine_runs(
    runs: &[(String, MetricReport)],
    grouping: RunGrouping,
) -> Result<MetricReport> {
    let Some((_, first)) = runs.first() else {
        return Err(Error::Validation("no runs to combine".into()));
    };
    let mut builder = ReportBuilder::default();
    for (label, report) in runs {
        for (name, entry) in &report.metrics {
            builder.declare(name, entry.suite);
            match entry.mean {
                Some(m) => builder.value(name, entry.suite, format!("run:{label}"), m),
                None => builder.skip(
                    name,
                    entry.suite,
                    Skip {
                        entity: format!("run:{label}"),
                        reason: "run produced no values".into(),
                    },
                ),
            }
            if let Some(na) = &entry.not_applicable {
                builder.not_applicable(name, entry.suite, na.clone());
            }
        }
    }
    let mut metadata = first.metadata.clone();
    metadata.grouping = grouping;
    metadata.runs = runs.iter().map(|(l, _)| l.clone()).collect();
    metadata.started_at = runs
        .iter()
        .map(|(_, r)| r.metadata.started_at)
        .min()
        .unwrap_or(0);
    metadata.finished_at = runs
        .iter()
        .map(|(_, r)| r.metadata.finished_at)
        .max()
        .unwrap_or(0);
    Ok(builder.finish(metadata))
}

/// Accumulates values and skips in insertion order.
#[derive(Debug, Default)]
pub struct ReportBuilder {
    metrics: BTreeMap<String, MetricEntry>,
}

impl ReportBuilder {
    fn entry(&mut self, metric: &str, suite: SuiteKind) -> &mut MetricEntry {
        self.metrics
            .entry(metric.to_string())
            .or_insert_with(|| MetricEntry::new(suite))
    }

    /// Makes sure the metric appears in the report even without entities.
    pub fn declare(&mut self, metric: &str, suite: SuiteKind) {
        self.entry(metric, suite);
    }

    pub fn value(&mut self, metric: &str, suite: SuiteKind, entity: impl Into<String>, value: f64) {
        self.entry(metric, suite).values.push(EntityValue {
            entity: entity.into(),
            value,
        });
    }

    pub fn skip(&mut self, metric: &str, suite: SuiteKind, skip: Skip) {
        self.entry(metric, suite).skipped.push(skip);
    }

    /// Records a value, or a skip when the computation failed or is non-finite.
    pub fn record(
        &mut self,
        metric: &str,
        suite: SuiteKind,
        entity: impl Into<String>,
        result: Result<f64>,
    ) {
        let entity = entity.into();
        match result {
            Ok(v) if v.is_finite() => self.value(metric, suite, entity, v),
            Ok(v) => self.skip(
                metric,
                suite,
                Skip {
                    entity,
                    reason: format!("non-finite value {v}"),
                },
            ),
            Err(e) => self.skip(metric, suite, Skip::from_error(entity, &e)),
        }
    }

    pub fn not_applicable(&mut self, metric: &str, suite: SuiteKind, reason: impl Into<String>) {
        self.entry(metric, suite).not_applicable = Some(reason.into());
    }

    pub fn finish(mut self, metadata: RunMetadata) -> MetricReport {
        for entry in self.metrics.values_mut() {
            entry.finalize();
        }
        MetricReport {
            metadata,
            metrics: self.metrics,
        }
    }
}
