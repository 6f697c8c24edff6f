//! Radar figures read back from the emitted SVG text.

use std::collections::BTreeMap;

use protoeval::pipeline::{default_axis, radar_normalize, render_svg, AxisSpec};

/// Value of `name="..."` inside one tag.
fn attr<'a>(tag: &'a str, name: &str) -> &'a str {
    let key = format!(" {name}=\"");
    let start = tag
        .find(&key)
        .unwrap_or_else(|| panic!("no {name} in {tag}"))
        + key.len();
    let len = tag[start..].find('"').unwrap();
    &tag[start..start + len]
}

fn tags<'a>(svg: &'a str, element: &str) -> Vec<&'a str> {
    let open = format!("<{element} ");
    svg.match_indices(&open)
        .map(|(i, _)| {
            let end = svg[i..].find('>').unwrap();
            &svg[i..i + end]
        })
        .collect()
}

const METRICS: [&str; 7] = [
    "completeness.pac",
    "completeness.plc",
    "completeness.vac",
    "completeness.vlc",
    "continuity.cac",
    "continuity.crc",
    "continuity.prc",
];

#[test]
fn seven_metric_radar_has_seven_axes_and_exact_vertex_radii() {
    let a: BTreeMap<String, f64> = METRICS
        .iter()
        .zip([0.2, 3.0, 0.5, 0.9, 0.1, 1.0, 2.0])
        .map(|(m, v)| (m.to_string(), v))
        .collect();
    let b: BTreeMap<String, f64> = METRICS
        .iter()
        .zip([0.6, 1.5, 0.0, 0.3, 0.4, 0.5, 4.0])
        .map(|(m, v)| (m.to_string(), v))
        .collect();
    let models = vec![("a".to_string(), a.clone()), ("b".to_string(), b.clone())];
    let axes: Vec<AxisSpec> = METRICS.iter().map(|m| default_axis(m).unwrap()).collect();
    let specs = radar_normalize(&models, &axes).unwrap();
    let svg = render_svg("change metrics", &specs);

    // expected values, computed from the axis definitions: ratio metrics are
    // divided by a bound of 1, distance and rank metrics by the largest value
    // across the two models; all seven axes are "lower is better" and flipped
    let expected = |values: &BTreeMap<String, f64>| -> Vec<f64> {
        METRICS
            .iter()
            .map(|m| {
                let bounded =
                    if ["completeness.plc", "continuity.crc", "continuity.prc"].contains(m) {
                        values[*m] / a[*m].max(b[*m])
                    } else {
                        values[*m]
                    };
                1.0 - bounded
            })
            .collect()
    };

    let root = tags(&svg, "svg")[0];
    let cx: f64 = attr(root, "data-cx").parse().unwrap();
    let cy: f64 = attr(root, "data-cy").parse().unwrap();
    let radius: f64 = attr(root, "data-radius").parse().unwrap();

    let lines: Vec<&str> = tags(&svg, "line")
        .into_iter()
        .filter(|t| attr(t, "class") == "axis")
        .collect();
    assert_eq!(lines.len(), 7);
    let axis_metrics: Vec<&str> = lines.iter().map(|t| attr(t, "data-metric")).collect();
    assert_eq!(axis_metrics, METRICS);
    let axis_dirs: Vec<(f64, f64)> = lines
        .iter()
        .map(|t| {
            let x: f64 = attr(t, "x2").parse().unwrap();
            let y: f64 = attr(t, "y2").parse().unwrap();
            ((x - cx) / radius, (y - cy) / radius)
        })
        .collect();

    let polygons = tags(&svg, "polygon");
    assert_eq!(polygons.len(), 2);
    for (poly, values) in polygons.iter().zip([&a, &b]) {
        let want = expected(values);
        let vertices: Vec<(f64, f64)> = attr(poly, "points")
            .split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (
                    x.parse::<f64>().unwrap() - cx,
                    y.parse::<f64>().unwrap() - cy,
                )
            })
            .collect();
        assert_eq!(vertices.len(), 7);
        for (i, &(x, y)) in vertices.iter().enumerate() {
            let r = x.hypot(y) / radius;
            assert!(
                (r - want[i]).abs() < 1e-6,
                "{} radius {r} vs {}",
                METRICS[i],
                want[i]
            );
            if r > 1e-6 {
                // the vertex sits on its own axis
                let (ux, uy) = axis_dirs[i];
                assert!(
                    (x / (r * radius) - ux).abs() < 1e-5 && (y / (r * radius) - uy).abs() < 1e-5
                );
            }
        }
    }
}
