// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::fs;

use regex::Regex;
use sega_core::report::{emit_report, render_csv, render_svg, ExperimentReport, ReportFormat, REPORT_CSV, REPORT_JSON, REPORT_SVG};
use sega_core::Error;

/// (label, preservation %, correctness %, expected pres_v, corr_v, region)
const RUST_ROWS: &[(&str, f64, f64, f64, f64, &str)] = &[
    ("sonnet", 100.0, 100.0, 1.0, 1.0, "(+,+) Ideal"),
    ("mistral", 100.0, 62.0, 1.0, 0.24, "(+,+) Ideal"),
    ("opus", 0.0, 100.0, -1.0, 1.0, "(-,+) Safe but opaque"),
    ("haiku3", 0.0, 0.0, -1.0, -1.0, "(-,-) Failing"),
];

fn rows() -> Vec<ExperimentReport> {
    RUST_ROWS
        .iter()
        .map(|(label, p, c, ..)| ExperimentReport::from_percentages(*label, 100.0, *p, Some(*c)).unwrap())
        .collect()
}

#[test]
fn quality_regions_for_rust_rows() {
    for (e, (_, _, _, pv, cv, region)) in rows().iter().zip(RUST_ROWS) {
        let p = e.point.unwrap();
        assert!((p.pres_v - pv).abs() <= 0.005 && (p.corr_v - cv).abs() <= 0.005);
        assert_eq!(e.quadrant.as_deref(), Some(*region));
    }
}

#[test]
fn svg_places_each_point_with_exact_coordinates() {
    let svg = render_svg(&rows());
    let re = Regex::new(r#"data-label="([^"]+)" data-pres-v="([^"]+)" data-corr-v="([^"]+)""#).unwrap();
    let found: Vec<(String, f64, f64)> = re
        .captures_iter(&svg)
        .map(|c| (c[1].to_owned(), c[2].parse().unwrap(), c[3].parse().unwrap()))
        .collect();
    assert_eq!(found.len(), RUST_ROWS.len());
    for ((label, pv, cv), (want, _, _, wp, wc, _)) in found.iter().zip(RUST_ROWS) {
        assert_eq!(label, want);
        assert!((pv - wp).abs() <= 0.005 && (cv - wc).abs() <= 0.005);
    }
    assert_eq!(svg.matches(r#"class="grid""#).count(), 2);
}

#[test]
fn origin_is_ideal_and_plotted_at_centre() {
    let e = ExperimentReport::from_percentages("origin", 50.0, 50.0, Some(50.0)).unwrap();
    assert_eq!(e.quadrant.as_deref(), Some("(+,+) Ideal"));
    assert_eq!(e.octant.as_deref(), Some("(+,+,+)"));
    let svg = render_svg(&[e]);
    assert!(svg.contains(r#"cx="240.000" cy="240.000""#), "{svg}");
}

#[test]
fn determinism_extends_to_octant() {
    let e = ExperimentReport::from_percentages("opus46", 30.0, 100.0, Some(100.0)).unwrap();
    let p = e.point.unwrap();
    assert_eq!(p.det_v, Some(-0.4));
    assert_eq!(e.octant.as_deref(), Some("(-,+,+)"));
}

#[test]
fn missing_correctness_is_listed_not_plotted() {
    let e = ExperimentReport::from_percentages("na", 100.0, 40.0, None).unwrap();
    assert!(e.point.is_none() && e.quadrant.is_none());
    assert!(render_csv(std::slice::from_ref(&e)).lines().nth(1).unwrap().contains("N/A"));
    assert!(!render_svg(&[e]).contains("<circle"));
}

#[test]
fn out_of_range_percentages_rejected() {
    assert!(matches!(ExperimentReport::from_percentages("bad", 50.0, 101.0, Some(1.0)), Err(Error::Domain(_))));
}

#[test]
fn emit_writes_requested_formats() {
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&rows(), &BTreeSet::new(), dir.path()).unwrap();
    assert_eq!(written, vec![dir.path().join(REPORT_JSON)]);
    let all: BTreeSet<ReportFormat> = [ReportFormat::Csv, ReportFormat::Svg].into();
    emit_report(&rows(), &all, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join(REPORT_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 1 + RUST_ROWS.len());
    assert!(dir.path().join(REPORT_SVG).exists());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(json[1]["point"]["corr_v"], 0.24);
    assert!(matches!(emit_report(&[], &all, dir.path()), Err(Error::Precondition(_))));
}
