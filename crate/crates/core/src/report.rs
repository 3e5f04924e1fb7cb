// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-experiment summaries as JSON, CSV and an SVG quality-region plot.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::MeasurementTarget;
use crate::metrics::{DeterminismResult, MeasuredRun, QualityPoint, SegaTriple};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "quality_regions.svg";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub model_id: String,
    pub provider: String,
    pub condition: String,
    pub language: String,
    pub corpus_hash: String,
    pub prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner: Option<String>,
}

/// Determinism detail without the per-run hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminismSummary {
    pub n_runs: usize,
    pub distinct_outputs: usize,
    pub modal_multiplicity: usize,
    pub determinism_pct: f64,
    pub all_unique_convention_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl From<&DeterminismResult> for DeterminismSummary {
    fn from(d: &DeterminismResult) -> Self {
        let note = (d.determinism_pct != d.all_unique_convention_pct).then(|| {
            format!(
                "all {} outputs differ: modal share is {}%, reported as {}% under the all-unique convention",
                d.n_runs, d.determinism_pct, d.all_unique_convention_pct
            )
        });
        Self {
            n_runs: d.n_runs,
            distinct_outputs: d.distinct_outputs,
            modal_multiplicity: d.modal_multiplicity,
            determinism_pct: d.determinism_pct,
            all_unique_convention_pct: d.all_unique_convention_pct,
            note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_index: u32,
    pub code_hash: String,
    pub preserved: usize,
    pub raw_count: usize,
    pub denominator: usize,
    pub preservation_pct: f64,
    pub measurement_target: MeasurementTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compiled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_pass: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests_passed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests_failed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests_ignored: Option<u32>,
    pub correctness_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl From<&MeasuredRun> for RunRow {
    fn from(r: &MeasuredRun) -> Self {
        let o = r.outcome.as_ref();
        let mut notes = r.preservation.notes.clone();
        if let Some(note) = o.and_then(|o| o.note.clone()) {
            notes.push(note);
        }
        if o.is_some_and(|o| o.no_tests) {
            notes.push("no tests executed".into());
        }
        Self {
            run_index: r.run_index,
            code_hash: r.code_hash.clone(),
            preserved: r.preservation.preserved,
            raw_count: r.preservation.raw_count,
            denominator: r.preservation.denominator,
            preservation_pct: r.preservation.percentage,
            measurement_target: r.preservation.measurement_target,
            compiled: o.and_then(|o| o.compiled),
            file_pass: o.map(|o| o.file_pass),
            tests_passed: o.map(|o| o.individual_passed),
            tests_failed: o.map(|o| o.individual_failed),
            tests_ignored: o.map(|o| o.individual_ignored),
            correctness_pct: r.correctness_pct(),
            notes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub provenance: Provenance,
    pub triple: SegaTriple,
    pub determinism: DeterminismSummary,
    pub point: Option<QualityPoint>,
    pub quadrant: Option<String>,
    pub octant: Option<String>,
    pub runs: Vec<RunRow>,
}

impl ExperimentReport {
    pub fn new(
        label: impl Into<String>,
        provenance: Provenance,
        triple: SegaTriple,
        determinism: &DeterminismResult,
        runs: &[MeasuredRun],
    ) -> Result<Self> {
        let point = triple.point()?;
        Ok(Self {
            label: label.into(),
            provenance,
            quadrant: point.map(|p| p.quadrant.to_string()),
            octant: point.and_then(|p| p.octant).map(|o| o.to_string()),
            point,
            triple,
            determinism: determinism.into(),
            runs: runs.iter().map(RunRow::from).collect(),
        })
    }

    /// A bare summary for experiments known only by their percentages.
    pub fn from_percentages(
        label: impl Into<String>,
        determinism_pct: f64,
        preservation_pct: f64,
        correctness_pct: Option<f64>,
    ) -> Result<Self> {
        let triple = SegaTriple {
            determinism_pct,
            preservation_pct,
            correctness_pct,
            correctness_note: None,
            file_pass_pct: None,
        };
        let point = triple.point()?;
        Ok(Self {
            label: label.into(),
            provenance: Provenance::default(),
            quadrant: point.map(|p| p.quadrant.to_string()),
            octant: point.and_then(|p| p.octant).map(|o| o.to_string()),
            point,
            determinism: DeterminismSummary {
                n_runs: 0,
                distinct_outputs: 0,
                modal_multiplicity: 0,
                determinism_pct,
                all_unique_convention_pct: determinism_pct,
                note: None,
            },
            triple,
            runs: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_owned(), |x| x.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn render_csv(experiments: &[ExperimentReport]) -> String {
    let mut out = String::from(
        "label,model_id,condition,language,n_runs,distinct_outputs,determinism_pct,\
         all_unique_convention_pct,preservation_pct,correctness_pct,file_pass_pct,det_v,pres_v,corr_v,quadrant,octant\n",
    );
    for e in experiments {
        let p = e.point.as_ref();
        let fields = [
            csv_field(&e.label),
            csv_field(&e.provenance.model_id),
            csv_field(&e.provenance.condition),
            csv_field(&e.provenance.language),
            e.determinism.n_runs.to_string(),
            e.determinism.distinct_outputs.to_string(),
            e.triple.determinism_pct.to_string(),
            e.determinism.all_unique_convention_pct.to_string(),
            e.triple.preservation_pct.to_string(),
            opt(e.triple.correctness_pct),
            opt(e.triple.file_pass_pct),
            opt(p.and_then(|p| p.det_v)),
            opt(p.map(|p| p.pres_v)),
            opt(p.map(|p| p.corr_v)),
            csv_field(e.quadrant.as_deref().unwrap_or("N/A")),
            csv_field(e.octant.as_deref().unwrap_or("N/A")),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn px(v: f64) -> f64 {
    MARGIN + (v + 1.0) / 2.0 * (SIZE - 2.0 * MARGIN)
}

fn py(v: f64) -> f64 {
    SIZE - px(v)
}

/// Scatter of (preservation, correctness) with gridlines at zero.
///
/// Marker radius grows with determinism when it is known. Exact coordinates
/// are carried in `data-*` attributes.
pub fn render_svg(experiments: &[ExperimentReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
    );
    let lo = px(-1.0);
    let hi = px(1.0);
    let mid = px(0.0);
    let _ = writeln!(s, r##"<rect x="{lo}" y="{lo}" width="{w}" height="{w}" fill="none" stroke="#888"/>"##, w = hi - lo);
    let _ = writeln!(s, r##"<line class="grid" x1="{mid}" y1="{lo}" x2="{mid}" y2="{hi}" stroke="#444"/>"##);
    let _ = writeln!(s, r##"<line class="grid" x1="{lo}" y1="{mid}" x2="{hi}" y2="{mid}" stroke="#444"/>"##);
    for (x, y, text) in [
        (0.5, 0.9, "(+,+) Ideal"),
        (0.5, -0.9, "(+,-) Dangerous"),
        (-0.5, 0.9, "(-,+) Safe but opaque"),
        (-0.5, -0.9, "(-,-) Failing"),
    ] {
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" text-anchor="middle" fill="#666">{}</text>"##,
            px(x),
            py(y),
            xml_escape(text)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">preservation v</text>"#, mid, SIZE - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{mid}" text-anchor="middle" transform="rotate(-90 20 {mid})">correctness v</text>"#
    );
    for e in experiments {
        let Some(p) = e.point else {
            let _ = writeln!(s, "<!-- {}: correctness N/A, not plotted -->", xml_escape(&e.label).replace("--", "- -"));
            continue;
        };
        let r = p.det_v.map_or(6.0, |d| 4.0 + 4.0 * (d + 1.0));
        let det_attr = p.det_v.map(|d| format!(r#" data-det-v="{d}""#)).unwrap_or_default();
        let _ = writeln!(
            s,
            r##"<circle class="point" cx="{:.3}" cy="{:.3}" r="{r}" fill="#1f77b4" fill-opacity="0.6" data-label="{}" data-pres-v="{}" data-corr-v="{}"{det_attr}><title>{}</title></circle>"##,
            px(p.pres_v),
            py(p.corr_v),
            xml_escape(&e.label),
            p.pres_v,
            p.corr_v,
            xml_escape(&e.label),
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write the report files. JSON is always written.
pub fn emit_report(
    experiments: &[ExperimentReport],
    formats: &BTreeSet<ReportFormat>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if experiments.is_empty() {
        return Err(Error::Precondition("no experiments to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    let mut json = serde_json::to_string_pretty(experiments)?;
    json.push('\n');
    write(REPORT_JSON, json)?;
    if formats.contains(&ReportFormat::Csv) {
        write(REPORT_CSV, render_csv(experiments))?;
    }
    if formats.contains(&ReportFormat::Svg) {
        write(REPORT_SVG, render_svg(experiments))?;
    }
    Ok(written)
}
