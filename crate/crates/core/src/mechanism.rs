// SPDX-License-Identifier: MIT OR Apache-2.0

//! WKV recurrence, effective attention, and knockout/steering interventions on
//! small synthetic instances, plus a causal softmax-attention counterpart.
//!
//! Streams are `(T, heads, head_dim)` arrays. Attention matrices are
//! `(heads, T, T)` with rows indexed by output position.

use std::collections::BTreeSet;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{kl_divergence, Distribution, KlMode, KlResult};

pub const MAX_SEQ_LEN: usize = 64;
pub const MAX_HEADS: usize = 4;
pub const MAX_HEAD_DIM: usize = 16;

/// The steering grid used by [`dose_response`] unless told otherwise.
pub const DEFAULT_SCALES: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 5.0, 9.0];

fn check_dims(t: usize, h: usize, d: usize) -> Result<()> {
    if t == 0 || h == 0 || d == 0 {
        return Err(Error::Shape(format!("dimensions must be positive, got T={t} H={h} D={d}")));
    }
    if t > MAX_SEQ_LEN || h > MAX_HEADS || d > MAX_HEAD_DIM {
        return Err(Error::Shape(format!(
            "T={t} H={h} D={d} exceeds the toy limits {MAX_SEQ_LEN}/{MAX_HEADS}/{MAX_HEAD_DIM}"
        )));
    }
    Ok(())
}

fn check_stream(name: &str, a: &Array3<f64>, shape: [usize; 3]) -> Result<()> {
    if a.shape() != shape {
        return Err(Error::Shape(format!("{name} has shape {:?}, expected {shape:?}", a.shape())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, shape: [usize; 3], lo: f64, hi: f64) -> Array3<f64> {
    Array3::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
}

/// Receptance, key, value and per-channel decay exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WkvParams {
    pub r: Array3<f64>,
    pub k: Array3<f64>,
    pub v: Array3<f64>,
    /// Positive decay exponents; the state keeps `exp(-w)` per key channel.
    pub w: Array3<f64>,
}

impl WkvParams {
    pub fn new(r: Array3<f64>, k: Array3<f64>, v: Array3<f64>, w: Array3<f64>) -> Result<Self> {
        let p = Self { r, k, v, w };
        p.validate()?;
        Ok(p)
    }

    /// Seeded instance with r, k, v in [-1, 1) and w in [0.05, 2).
    pub fn random(seed: u64, seq_len: usize, n_heads: usize, head_dim: usize) -> Result<Self> {
        check_dims(seq_len, n_heads, head_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [seq_len, n_heads, head_dim];
        let r = uniform(&mut rng, shape, -1.0, 1.0);
        let k = uniform(&mut rng, shape, -1.0, 1.0);
        let v = uniform(&mut rng, shape, -1.0, 1.0);
        let w = uniform(&mut rng, shape, 0.05, 2.0);
        Self::new(r, k, v, w)
    }

    pub fn seq_len(&self) -> usize {
        self.r.shape()[0]
    }

    pub fn n_heads(&self) -> usize {
        self.r.shape()[1]
    }

    pub fn head_dim(&self) -> usize {
        self.r.shape()[2]
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.r.shape();
        check_dims(s[0], s[1], s[2])?;
        let shape = [s[0], s[1], s[2]];
        check_stream("r", &self.r, shape)?;
        check_stream("k", &self.k, shape)?;
        check_stream("v", &self.v, shape)?;
        check_stream("w", &self.w, shape)?;
        if self.w.iter().any(|x| *x <= 0.0) {
            return Err(Error::Domain("decay exponents must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionTarget {
    StateWrite,
    AttentionEdges,
}

/// Which softmax edges an attention intervention touches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EdgeSelection {
    /// Every edge from a later row into each listed position.
    #[default]
    IntoPositions,
    /// Edges leaving each listed row, restricted to `to` when given.
    FromPositions { to: Option<BTreeSet<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub positions: BTreeSet<usize>,
    pub scale: f64,
    pub target: InterventionTarget,
    #[serde(default)]
    pub edges: EdgeSelection,
}

impl InterventionSpec {
    pub fn state(positions: impl IntoIterator<Item = usize>, scale: f64) -> Self {
        Self {
            positions: positions.into_iter().collect(),
            scale,
            target: InterventionTarget::StateWrite,
            edges: EdgeSelection::default(),
        }
    }

    pub fn state_knockout(positions: impl IntoIterator<Item = usize>) -> Self {
        Self::state(positions, 0.0)
    }

    pub fn edges(positions: impl IntoIterator<Item = usize>, scale: f64, edges: EdgeSelection) -> Self {
        Self {
            positions: positions.into_iter().collect(),
            scale,
            target: InterventionTarget::AttentionEdges,
            edges,
        }
    }

    fn validate(&self, target: InterventionTarget, seq_len: usize) -> Result<()> {
        if self.target != target {
            return Err(Error::Precondition(format!(
                "intervention targets {:?}, this forward accepts {:?}",
                self.target, target
            )));
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::Domain(format!("scale {} must be finite and non-negative", self.scale)));
        }
        let bad = |p: &usize| *p >= seq_len;
        let mut all = self.positions.iter().collect::<Vec<_>>();
        if let EdgeSelection::FromPositions { to: Some(to) } = &self.edges {
            all.extend(to);
        }
        if let Some(p) = all.into_iter().find(|p| bad(p)) {
            return Err(Error::Shape(format!("position {p} outside sequence of length {seq_len}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum WriteMode {
    /// Scale 0 drops the write entirely.
    Knockout,
    Scaled(f64),
}

fn forward(params: &WkvParams, scaled: &BTreeSet<usize>, mode: Option<WriteMode>) -> Array3<f64> {
    let (t_len, h_len, d) = (params.seq_len(), params.n_heads(), params.head_dim());
    let mut out = Array3::zeros((t_len, h_len, d));
    for h in 0..h_len {
        // state[key channel, value channel]
        let mut state = Array2::<f64>::zeros((d, d));
        for t in 0..t_len {
            let write = if scaled.contains(&t) { mode } else { None };
            for ck in 0..d {
                let decay = (-params.w[[t, h, ck]]).exp();
                let k = params.k[[t, h, ck]];
                for cv in 0..d {
                    let prev = decay * state[[ck, cv]];
                    state[[ck, cv]] = match write {
                        None => k * params.v[[t, h, cv]] + prev,
                        Some(WriteMode::Knockout) => prev,
                        Some(WriteMode::Scaled(s)) => s * (k * params.v[[t, h, cv]]) + prev,
                    };
                }
            }
            for cv in 0..d {
                let mut acc = 0.0;
                for ck in 0..d {
                    acc += params.r[[t, h, ck]] * state[[ck, cv]];
                }
                out[[t, h, cv]] = acc;
            }
        }
    }
    out
}

/// Run the recurrence, optionally scaling the kv write at some positions.
///
/// Scale 1 leaves those positions untouched and scale 0 drops their write.
pub fn wkv_forward(params: &WkvParams, intervention: Option<&InterventionSpec>) -> Result<Array3<f64>> {
    params.validate()?;
    let Some(iv) = intervention else {
        return Ok(forward(params, &BTreeSet::new(), None));
    };
    iv.validate(InterventionTarget::StateWrite, params.seq_len())?;
    let mode = if iv.scale == 1.0 {
        None
    } else if iv.scale == 0.0 {
        Some(WriteMode::Knockout)
    } else {
        Some(WriteMode::Scaled(iv.scale))
    };
    Ok(forward(params, &iv.positions, mode))
}

/// Like [`wkv_forward`] but always multiplies the write by `scale`, even at 0.
pub fn wkv_forward_steered(params: &WkvParams, positions: &BTreeSet<usize>, scale: f64) -> Result<Array3<f64>> {
    params.validate()?;
    InterventionSpec::state(positions.iter().copied(), scale)
        .validate(InterventionTarget::StateWrite, params.seq_len())?;
    Ok(forward(params, positions, Some(WriteMode::Scaled(scale))))
}

/// Per-channel decay accumulated between positions `j` and `t`, shape `(heads, head_dim)`.
pub fn cumulative_decay(w: &Array3<f64>, t: usize, j: usize) -> Result<Array2<f64>> {
    if j > t {
        return Err(Error::Domain(format!("cumulative_decay needs j <= t, got j={j} t={t}")));
    }
    if t >= w.shape()[0] {
        return Err(Error::Shape(format!("t={t} outside sequence of length {}", w.shape()[0])));
    }
    let mut d = Array2::ones((w.shape()[1], w.shape()[2]));
    for tau in j + 1..=t {
        d.zip_mut_with(&w.index_axis(Axis(0), tau), |acc, wi| *acc *= (-wi).exp());
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAttention {
    /// Signed scores; their weighted sum of values is the layer output.
    pub raw: Array3<f64>,
    pub rectified: Array3<f64>,
    /// Rows sum to 1, or are all zero when no score was positive.
    pub normalized: Array3<f64>,
}

impl EffectiveAttention {
    /// Head-averaged normalized matrix.
    pub fn mean_over_heads(&self) -> Array2<f64> {
        self.normalized.mean_axis(Axis(0)).expect("at least one head")
    }
}

pub fn effective_attention(params: &WkvParams) -> Result<EffectiveAttention> {
    params.validate()?;
    let (t_len, h_len, d) = (params.seq_len(), params.n_heads(), params.head_dim());
    let mut raw = Array3::zeros((h_len, t_len, t_len));
    for h in 0..h_len {
        for t in 0..t_len {
            // decay[c] == D(t, j)[c] as j walks down from t.
            let mut decay = vec![1.0f64; d];
            for j in (0..=t).rev() {
                let mut score = 0.0;
                for (c, dc) in decay.iter().enumerate() {
                    score += params.r[[t, h, c]] * dc * params.k[[j, h, c]];
                }
                raw[[h, t, j]] = score;
                for (c, dc) in decay.iter_mut().enumerate() {
                    *dc *= (-params.w[[j, h, c]]).exp();
                }
            }
        }
    }
    let rectified = raw.mapv(|x: f64| x.max(0.0));
    let mut normalized = rectified.clone();
    for mut row in normalized.lanes_mut(Axis(2)) {
        let sum: f64 = row.sum();
        if sum > 0.0 {
            row.mapv_inplace(|x| x / sum);
        } else {
            row.fill(0.0);
        }
    }
    Ok(EffectiveAttention {
        raw,
        rectified,
        normalized,
    })
}

/// Query/key/value streams for a single causal softmax layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyAttentionParams {
    pub q: Array3<f64>,
    pub k: Array3<f64>,
    pub v: Array3<f64>,
}

impl ToyAttentionParams {
    pub fn new(q: Array3<f64>, k: Array3<f64>, v: Array3<f64>) -> Result<Self> {
        let p = Self { q, k, v };
        p.validate()?;
        Ok(p)
    }

    pub fn random(seed: u64, seq_len: usize, n_heads: usize, head_dim: usize) -> Result<Self> {
        check_dims(seq_len, n_heads, head_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [seq_len, n_heads, head_dim];
        let q = uniform(&mut rng, shape, -1.0, 1.0);
        let k = uniform(&mut rng, shape, -1.0, 1.0);
        let v = uniform(&mut rng, shape, -1.0, 1.0);
        Self::new(q, k, v)
    }

    pub fn seq_len(&self) -> usize {
        self.q.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.q.shape();
        check_dims(s[0], s[1], s[2])?;
        let shape = [s[0], s[1], s[2]];
        check_stream("q", &self.q, shape)?;
        check_stream("k", &self.k, shape)?;
        check_stream("v", &self.v, shape)
    }
}

/// Causal softmax attention with an optional post-softmax edge intervention.
///
/// Scaled rows are renormalized. Returns `(attention, outputs)`.
pub fn softmax_forward(
    params: &ToyAttentionParams,
    intervention: Option<&InterventionSpec>,
) -> Result<(Array3<f64>, Array3<f64>)> {
    params.validate()?;
    let s = params.q.shape();
    let (t_len, h_len, d) = (s[0], s[1], s[2]);
    if let Some(iv) = intervention {
        iv.validate(InterventionTarget::AttentionEdges, t_len)?;
    }
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut attn = Array3::zeros((h_len, t_len, t_len));
    for h in 0..h_len {
        for t in 0..t_len {
            let scores: Vec<f64> = (0..=t)
                .map(|j| (0..d).map(|c| params.q[[t, h, c]] * params.k[[j, h, c]]).sum::<f64>() * inv_sqrt_d)
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|x| (x - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                attn[[h, t, j]] = e / z;
            }
        }
    }
    if let Some(iv) = intervention.filter(|iv| iv.scale != 1.0) {
        for h in 0..h_len {
            for t in 0..t_len {
                let cols: Vec<usize> = match &iv.edges {
                    EdgeSelection::IntoPositions => iv.positions.iter().copied().filter(|&j| j < t).collect(),
                    EdgeSelection::FromPositions { to } if iv.positions.contains(&t) => match to {
                        Some(to) => to.iter().copied().filter(|&j| j <= t).collect(),
                        None => (0..=t).collect(),
                    },
                    EdgeSelection::FromPositions { .. } => Vec::new(),
                };
                if cols.is_empty() {
                    continue;
                }
                for &j in &cols {
                    attn[[h, t, j]] *= iv.scale;
                }
                let sum: f64 = (0..=t).map(|j| attn[[h, t, j]]).sum();
                if sum <= 0.0 {
                    return Err(Error::DegenerateRow { head: h, row: t });
                }
                for j in 0..=t {
                    attn[[h, t, j]] /= sum;
                }
            }
        }
    }
    let mut out = Array3::zeros((t_len, h_len, d));
    for h in 0..h_len {
        for t in 0..t_len {
            for c in 0..d {
                out[[t, h, c]] = (0..=t).map(|j| attn[[h, t, j]] * params.v[[j, h, c]]).sum();
            }
        }
    }
    Ok((attn, out))
}

/// Average attention mass that marker rows place on function columns, in percent.
pub fn marker_function_attention(
    attn: ArrayView2<f64>,
    marker_positions: &[usize],
    function_positions: &[usize],
) -> Result<f64> {
    if marker_positions.is_empty() || function_positions.is_empty() {
        return Err(Error::Domain("marker and function position sets must be non-empty".into()));
    }
    let (rows, cols) = attn.dim();
    if let Some(p) = marker_positions.iter().find(|&&p| p >= rows) {
        return Err(Error::Domain(format!("marker position {p} outside {rows} rows")));
    }
    if let Some(p) = function_positions.iter().find(|&&p| p >= cols) {
        return Err(Error::Domain(format!("function position {p} outside {cols} columns")));
    }
    if marker_positions.iter().any(|m| function_positions.contains(m)) {
        return Err(Error::Domain("marker and function positions overlap".into()));
    }
    let total: f64 = marker_positions
        .iter()
        .map(|&m| function_positions.iter().map(|&f| attn[[m, f]]).sum::<f64>())
        .sum();
    Ok(100.0 * total / marker_positions.len() as f64)
}

/// Fixed random linear readout from the final output to a softmax distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub readout: Array2<f64>,
}

impl Probe {
    pub fn random(seed: u64, vocab: usize, n_heads: usize, head_dim: usize) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::Shape("probe vocabulary needs at least 2 entries".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let readout = Array2::from_shape_simple_fn((vocab, n_heads * head_dim), || rng.random_range(-1.0..1.0));
        Ok(Self { readout })
    }

    /// Distribution over the probe vocabulary for the last position's output.
    pub fn distribution(&self, outputs: &Array3<f64>) -> Result<Distribution> {
        let last = outputs.index_axis(Axis(0), outputs.shape()[0] - 1);
        let flat: Vec<f64> = last.iter().copied().collect();
        if flat.len() != self.readout.shape()[1] {
            return Err(Error::Shape(format!(
                "probe expects {} features, output has {}",
                self.readout.shape()[1],
                flat.len()
            )));
        }
        let logits: Vec<f64> = self
            .readout
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&flat).map(|(a, b)| a * b).sum())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Distribution::new(logits.iter().map(|x| (x - max).exp()).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosePoint {
    pub scale: f64,
    pub kl: KlResult,
}

/// KL(baseline || steered) of the probe distribution for each scale.
pub fn dose_response(
    params: &WkvParams,
    positions: &BTreeSet<usize>,
    scales: &[f64],
    probe: &Probe,
) -> Result<Vec<DosePoint>> {
    if !scales.contains(&1.0) {
        return Err(Error::Precondition("the scale grid must include 1.0".into()));
    }
    let base = probe.distribution(&wkv_forward(params, None)?)?;
    scales
        .iter()
        .map(|&scale| {
            let out = wkv_forward_steered(params, positions, scale)?;
            let q = probe.distribution(&out)?;
            Ok(DosePoint {
                scale,
                kl: kl_divergence(&base, &q, KlMode::Exact)?,
            })
        })
        .collect()
}
