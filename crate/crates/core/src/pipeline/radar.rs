//! Radar-chart normalization and standalone SVG emission.
//!
//! Every axis is scaled to `[0, 1]` either by a fixed metric bound or by the
//! largest value observed across the compared models; lower-is-better axes are
//! inverted so that a larger polygon is always better.

use std::collections::BTreeMap;
use std::f64::consts::{LN_10, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::SuiteKind;
use super::report::MetricReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    FixedBounds,
    MaxAcrossModels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub metric: String,
    pub mode: NormalizationMode,
    /// Required in fixed-bounds mode.
    pub bound: Option<f64>,
    pub inverted: bool,
}

impl AxisSpec {
    fn fixed(metric: &str, bound: f64, inverted: bool) -> Self {
        AxisSpec {
            metric: metric.into(),
            mode: NormalizationMode::FixedBounds,
            bound: Some(bound),
            inverted,
        }
    }

    fn max(metric: &str, inverted: bool) -> Self {
        AxisSpec {
            metric: metric.into(),
            mode: NormalizationMode::MaxAcrossModels,
            bound: None,
            inverted,
        }
    }
}

/// Default axis of a report metric, or `None` for unknown names.
pub fn default_axis(metric: &str) -> Option<AxisSpec> {
    let (fixed, max) = (AxisSpec::fixed, AxisSpec::max);
    Some(match metric {
        "completeness.vlc" | "completeness.vac" | "completeness.psc" | "completeness.palc"
        | "completeness.pac" | "continuity.psc" | "continuity.palc" | "continuity.pac"
        | "continuity.cac" => fixed(metric, 1.0, true),
        "completeness.plc" | "continuity.plc" | "continuity.prc" | "continuity.crc" => {
            max(metric, true)
        }
        "contrastivity.plc_contra" => max(metric, false),
        "contrastivity.palc_contra" => fixed(metric, 1.0, false),
        "contrastivity.apd_inter"
        | "contrastivity.apd_intra"
        | "contrastivity.afd_inter"
        | "contrastivity.afd_intra" => fixed(metric, 2.0, false),
        "contrastivity.entropy" => fixed(metric, LN_10, true),
        "complexity.object_overlap" | "complexity.iord" | "complexity.consistency" => {
            fixed(metric, 1.0, false)
        }
        "complexity.background_overlap" => fixed(metric, 1.0, true),
        "compactness.global_size" | "compactness.npr" | "compactness.local_size" => {
            max(metric, true)
        }
        "compactness.sparsity" => fixed(metric, 1.0, false),
        "performance.accuracy" | "performance.topk_accuracy" | "performance.f1" => {
            fixed(metric, 1.0, false)
        }
        _ => return None,
    })
}

pub fn invert(v: f64) -> f64 {
    1.0 - v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarValue {
    pub metric: String,
    pub raw: Option<f64>,
    /// In `[0, 1]`, inversion already applied.
    pub normalized: f64,
    pub inverted: bool,
    pub mode: NormalizationMode,
    pub bound: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSpec {
    pub model: String,
    pub values: Vec<RadarValue>,
}

/// Normalizes the metric values of several models onto common radar axes.
pub fn radar_normalize(
    models: &[(String, BTreeMap<String, f64>)],
    axes: &[AxisSpec],
) -> Result<Vec<RadarSpec>> {
    let mut specs: Vec<RadarSpec> = models
        .iter()
        .map(|(name, _)| RadarSpec {
            model: name.clone(),
            values: Vec::with_capacity(axes.len()),
        })
        .collect();
    for axis in axes {
        let observed: Vec<f64> = models
            .iter()
            .filter_map(|(_, vals)| vals.get(&axis.metric).copied())
            .collect();
        let (bound, zero_max) = match axis.mode {
            NormalizationMode::FixedBounds => {
                let b = axis
                    .bound
                    .filter(|b| *b > 0.0 && b.is_finite())
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "axis {} needs a positive fixed bound",
                            axis.metric
                        ))
                    })?;
                (b, false)
            }
            NormalizationMode::MaxAcrossModels => {
                if observed.is_empty() {
                    return Err(Error::Validation(format!(
                        "no model reports {}",
                        axis.metric
                    )));
                }
                let m = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (m, !(m > 0.0))
            }
        };
        for (spec, (_, vals)) in specs.iter_mut().zip(models) {
            let raw = vals.get(&axis.metric).copied();
            let (normalized, note) = match raw {
                None => (0.0, Some("metric missing for this model".to_string())),
                Some(_) if zero_max => (0.0, Some("maximum across models is zero".to_string())),
                Some(v) => {
                    let n = (v / bound).clamp(0.0, 1.0);
                    (if axis.inverted { invert(n) } else { n }, None)
                }
            };
            spec.values.push(RadarValue {
                metric: axis.metric.clone(),
                raw,
                normalized,
                inverted: axis.inverted,
                mode: axis.mode,
                bound,
                note,
            });
        }
    }
    Ok(specs)
}

/// Radar specs per suite for a set of `(model label, report)` pairs, using the
/// default axes of every metric with a mean in at least one report.
pub fn radar_groups(
    reports: &[(String, MetricReport)],
) -> Result<BTreeMap<SuiteKind, Vec<RadarSpec>>> {
    let mut axes: BTreeMap<SuiteKind, Vec<AxisSpec>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for (_, r) in reports {
        for (name, entry) in &r.metrics {
            if entry.mean.is_some() && seen.insert(name.clone()) {
                if let Some(axis) = default_axis(name) {
                    axes.entry(entry.suite).or_default().push(axis);
                }
            }
        }
    }
    let models: Vec<(String, BTreeMap<String, f64>)> = reports
        .iter()
        .map(|(label, r)| {
            let vals = r
                .metrics
                .iter()
                .filter_map(|(name, e)| e.mean.map(|m| (name.clone(), m)))
                .collect();
            (label.clone(), vals)
        })
        .collect();
    axes.into_iter()
        .map(|(suite, mut group)| {
            group.sort_by(|a, b| a.metric.cmp(&b.metric));
            Ok((suite, radar_normalize(&models, &group)?))
        })
        .collect()
}

pub const SVG_SIZE: f64 = 480.0;
pub const SVG_RADIUS: f64 = 170.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Angle of axis `i` of `n`, starting at twelve o'clock, clockwise.
pub fn axis_angle(i: usize, n: usize) -> f64 {
    -PI / 2.0 + 2.0 * PI * i as f64 / n as f64
}

/// Standalone SVG: one `line.axis` per metric and one `polygon.series` per model
/// whose vertex on axis `i` lies at radius `normalized · SVG_RADIUS`.
pub fn render_svg(title: &str, specs: &[RadarSpec]) -> String {
    let c = SVG_SIZE / 2.0;
    let metrics: Vec<&str> = specs
        .first()
        .map(|s| s.values.iter().map(|v| v.metric.as_str()).collect())
        .unwrap_or_default();
    let n = metrics.len();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}" data-cx="{c}" data-cy="{c}" data-radius="{SVG_RADIUS}">"#
    );
    let _ = writeln!(out, "  <title>{}</title>", escape(title));
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r##"  <circle class="grid" cx="{c}" cy="{c}" r="{:.6}" fill="none" stroke="#cccccc"/>"##,
            ring * SVG_RADIUS
        );
    }
    for (i, m) in metrics.iter().enumerate() {
        let a = axis_angle(i, n);
        let (x, y) = (c + SVG_RADIUS * a.cos(), c + SVG_RADIUS * a.sin());
        let _ = writeln!(
            out,
            r##"  <line class="axis" data-metric="{}" x1="{c}" y1="{c}" x2="{x:.6}" y2="{y:.6}" stroke="#888888"/>"##,
            escape(m)
        );
        let (lx, ly) = (
            c + (SVG_RADIUS + 22.0) * a.cos(),
            c + (SVG_RADIUS + 22.0) * a.sin(),
        );
        let _ = writeln!(
            out,
            r#"  <text x="{lx:.2}" y="{ly:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            escape(m)
        );
    }
    for (k, spec) in specs.iter().enumerate() {
        let points: Vec<String> = spec
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let a = axis_angle(i, n);
                let r = v.normalized * SVG_RADIUS;
                format!("{:.6},{:.6}", c + r * a.cos(), c + r * a.sin())
            })
            .collect();
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"  <polygon class="series" data-model="{}" points="{}" fill="{colour}" fill-opacity="0.2" stroke="{colour}"/>"#,
            escape(&spec.model),
            points.join(" ")
        );
    }
    for (k, spec) in specs.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"  <text x="8" y="{}" font-size="12" fill="{}">{}</text>"#,
            16 + 14 * k,
            PALETTE[k % PALETTE.len()],
            escape(&spec.model)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models(vals: &[(&str, &[(&str, f64)])]) -> Vec<(String, BTreeMap<String, f64>)> {
        vals.iter()
            .map(|(m, kv)| {
                (
                    m.to_string(),
                    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn fixed_bound_inversion() {
        let m = models(&[("a", &[("completeness.vlc", 0.25)])]);
        let spec = radar_normalize(&m, &[default_axis("completeness.vlc").unwrap()]).unwrap();
        assert_eq!(spec[0].values[0].normalized, 0.75);
    }

    #[test]
    fn max_mode_best_model_is_one() {
        let m = models(&[
            ("a", &[("contrastivity.plc_contra", 3.0)]),
            ("b", &[("contrastivity.plc_contra", 6.0)]),
        ]);
        let spec =
            radar_normalize(&m, &[default_axis("contrastivity.plc_contra").unwrap()]).unwrap();
        assert_eq!(spec[1].values[0].normalized, 1.0);
        assert_eq!(spec[0].values[0].normalized, 0.5);
        assert_eq!(spec[0].values[0].bound, 6.0);
    }

    #[test]
    fn entropy_at_bound_inverts_to_zero() {
        let m = models(&[("a", &[("contrastivity.entropy", LN_10)])]);
        let spec = radar_normalize(&m, &[default_axis("contrastivity.entropy").unwrap()]).unwrap();
        assert_eq!(spec[0].values[0].normalized, 0.0);
    }

    #[test]
    fn zero_max_emits_zero_with_note() {
        let m = models(&[
            ("a", &[("compactness.npr", 0.0)]),
            ("b", &[("compactness.npr", 0.0)]),
        ]);
        let spec = radar_normalize(&m, &[default_axis("compactness.npr").unwrap()]).unwrap();
        for s in &spec {
            assert_eq!(s.values[0].normalized, 0.0);
            assert!(s.values[0].note.is_some());
        }
    }

    #[test]
    fn inversion_is_an_involution() {
        for v in [0.0, 0.25, 0.5, 0.75, 1.0, 0.3] {
            assert!((invert(invert(v)) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_bound_and_values_are_rejected() {
        let m = models(&[("a", &[("x", 1.0)])]);
        let no_bound = AxisSpec {
            metric: "x".into(),
            mode: NormalizationMode::FixedBounds,
            bound: None,
            inverted: false,
        };
        assert!(radar_normalize(&m, &[no_bound]).is_err());
        assert!(radar_normalize(&m, &[AxisSpec::max("y", false)]).is_err());
    }

    #[test]
    fn every_report_metric_has_a_default_axis() {
        for name in [
            "completeness.vlc",
            "continuity.crc",
            "contrastivity.afd_intra",
            "complexity.consistency",
            "compactness.local_size",
            "performance.topk_accuracy",
        ] {
            assert!(default_axis(name).is_some(), "{name}");
        }
        assert!(default_axis("speed").is_none());
    }

    #[test]
    fn svg_escapes_labels() {
        let m = models(&[("a<b>", &[("completeness.vlc", 0.5)])]);
        let spec = radar_normalize(&m, &[default_axis("completeness.vlc").unwrap()]).unwrap();
        let svg = render_svg("t & u", &spec);
        assert!(svg.contains("a&lt;b&gt;"));
        assert!(svg.contains("t &amp; u"));
    }
}
