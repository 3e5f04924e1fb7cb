// SPDX-License-Identifier: MIT OR Apache-2.0

//! Determinism, preservation and correctness, and their quality regions.

use std::collections::HashMap;
use std::fmt;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::PreservationResult;
use crate::runners::TestOutcome;

/// Hex MD5 of a file's bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Md5::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminismResult {
    pub n_runs: usize,
    pub distinct_outputs: usize,
    pub modal_multiplicity: usize,
    /// 100 * modal_multiplicity / n_runs.
    pub determinism_pct: f64,
    /// Reporting convention where a batch with no repeated output reads 0%.
    pub all_unique_convention_pct: f64,
    pub hashes: Vec<String>,
}

/// Modal share of identical outputs across a batch.
pub fn determinism<T: AsRef<[u8]>>(code_files: &[T]) -> Result<DeterminismResult> {
    if code_files.is_empty() {
        return Err(Error::Precondition("determinism needs at least one output".into()));
    }
    let hashes: Vec<String> = code_files.iter().map(|f| content_hash(f.as_ref())).collect();
    determinism_from_hashes(hashes)
}

pub fn determinism_from_hashes(hashes: Vec<String>) -> Result<DeterminismResult> {
    if hashes.is_empty() {
        return Err(Error::Precondition("determinism needs at least one output".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for h in &hashes {
        *counts.entry(h).or_default() += 1;
    }
    let n = hashes.len();
    let distinct = counts.len();
    let modal = counts.values().copied().max().unwrap_or(0);
    let pct = 100.0 * modal as f64 / n as f64;
    let convention = if distinct == n && n > 1 { 0.0 } else { pct };
    Ok(DeterminismResult {
        n_runs: n,
        distinct_outputs: distinct,
        modal_multiplicity: modal,
        determinism_pct: pct,
        all_unique_convention_pct: convention,
        hashes,
    })
}

/// Map a percentage onto [-1, +1] with 50% at the origin.
pub fn normalize(p: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Domain(format!("percentage {p} outside [0, 100]")));
    }
    Ok((p - 50.0) / 50.0)
}

/// Inverse of [`normalize`].
pub fn denormalize(v: f64) -> f64 {
    v * 50.0 + 50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    /// Exact zero counts as positive.
    pub fn of(v: f64) -> Sign {
        if v >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Region in the (preservation, correctness) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrant {
    Pp,
    Pm,
    Mp,
    Mm,
}

impl Quadrant {
    pub fn from_signs(pres: Sign, corr: Sign) -> Self {
        match (pres, corr) {
            (Sign::Plus, Sign::Plus) => Quadrant::Pp,
            (Sign::Plus, Sign::Minus) => Quadrant::Pm,
            (Sign::Minus, Sign::Plus) => Quadrant::Mp,
            (Sign::Minus, Sign::Minus) => Quadrant::Mm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrant::Pp => "Ideal",
            Quadrant::Pm => "Dangerous",
            Quadrant::Mp => "Safe but opaque",
            Quadrant::Mm => "Failing",
        }
    }

    pub fn signs(self) -> (Sign, Sign) {
        match self {
            Quadrant::Pp => (Sign::Plus, Sign::Plus),
            Quadrant::Pm => (Sign::Plus, Sign::Minus),
            Quadrant::Mp => (Sign::Minus, Sign::Plus),
            Quadrant::Mm => (Sign::Minus, Sign::Minus),
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, c) = self.signs();
        write!(f, "({},{}) {}", p.symbol(), c.symbol(), self.label())
    }
}

/// Sign triple (determinism, preservation, correctness).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Octant(pub Sign, pub Sign, pub Sign);

impl fmt::Display for Octant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0.symbol(), self.1.symbol(), self.2.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPoint {
    pub det_v: Option<f64>,
    pub pres_v: f64,
    pub corr_v: f64,
    pub quadrant: Quadrant,
    pub octant: Option<Octant>,
}

pub fn classify(det_v: Option<f64>, pres_v: f64, corr_v: f64) -> QualityPoint {
    let (p, c) = (Sign::of(pres_v), Sign::of(corr_v));
    QualityPoint {
        det_v,
        pres_v,
        corr_v,
        quadrant: Quadrant::from_signs(p, c),
        octant: det_v.map(|d| Octant(Sign::of(d), p, c)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegaTriple {
    pub determinism_pct: f64,
    pub preservation_pct: f64,
    /// Mean over runs with a defined value; `None` when no run had one.
    pub correctness_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_note: Option<String>,
    /// Share of runs whose whole file passed. Reported next to, never instead
    /// of, individual-test correctness.
    pub file_pass_pct: Option<f64>,
}

impl SegaTriple {
    pub fn point(&self) -> Result<Option<QualityPoint>> {
        let Some(corr) = self.correctness_pct else {
            return Ok(None);
        };
        Ok(Some(classify(
            Some(normalize(self.determinism_pct)?),
            normalize(self.preservation_pct)?,
            normalize(corr)?,
        )))
    }
}

/// One run's measurements feeding [`aggregate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRun {
    pub run_index: u32,
    pub code_hash: String,
    pub preservation: PreservationResult,
    pub outcome: Option<TestOutcome>,
}

impl MeasuredRun {
    pub fn new(run_index: u32, code: &[u8], preservation: PreservationResult, outcome: Option<TestOutcome>) -> Self {
        Self {
            run_index,
            code_hash: content_hash(code),
            preservation,
            outcome,
        }
    }

    pub fn correctness_pct(&self) -> Option<f64> {
        self.outcome.as_ref().and_then(TestOutcome::correctness_pct)
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Combine a batch into one triple plus its determinism detail.
pub fn aggregate(runs: &[MeasuredRun]) -> Result<(SegaTriple, DeterminismResult)> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Precondition("aggregate needs at least one run".into()))?;
    let denom = first.preservation.denominator;
    if let Some(r) = runs.iter().find(|r| r.preservation.denominator != denom) {
        return Err(Error::Aggregation(format!(
            "run {} has denominator {} but run {} has {}",
            r.run_index, r.preservation.denominator, first.run_index, denom
        )));
    }
    let det = determinism_from_hashes(runs.iter().map(|r| r.code_hash.clone()).collect())?;
    let pres: Vec<f64> = runs.iter().map(|r| r.preservation.percentage).collect();
    let corr: Vec<f64> = runs.iter().filter_map(MeasuredRun::correctness_pct).collect();
    let files: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.outcome.as_ref())
        .map(|o| if o.file_pass { 100.0 } else { 0.0 })
        .collect();
    let excluded = runs.len() - corr.len();
    let correctness_note = match (corr.is_empty(), excluded) {
        (true, _) => Some("N/A: no run executed any test".to_owned()),
        (false, 0) => None,
        (false, n) => Some(format!("{n} run(s) without executed tests excluded")),
    };
    Ok((
        SegaTriple {
            determinism_pct: det.determinism_pct,
            preservation_pct: mean(&pres).unwrap_or(0.0),
            correctness_pct: mean(&corr),
            correctness_note,
            file_pass_pct: mean(&files),
        },
        det,
    ))
}
