// SPDX-License-Identifier: MIT OR Apache-2.0

//! Welch's t-test, KL divergence and attention-contrast ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: impl Into<Vec<f64>>) -> Self {
        Self {
            values: values.into(),
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|x| (x - m) * (x - m)).sum();
        ss / (self.values.len() as f64 - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_statistic: f64,
    pub dof: f64,
    pub p_two_sided: f64,
}

/// Two-sample t-test without the equal-variance assumption.
pub fn welch_t(a: &Sample, b: &Sample) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::Precondition(format!(
                "sample {:?} has {} values, need at least 2",
                s.label,
                s.len()
            )));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sample {:?} has non-finite values", s.label)));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (a.variance() / na, b.variance() / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::DegenerateSample(format!(
            "{:?} and {:?} both have zero variance",
            a.label, b.label
        )));
    }
    let t = (a.mean() - b.mean()) / se2.sqrt();
    let dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult {
        t_statistic: t,
        dof,
        p_two_sided: student_t_two_sided_p(t, dof),
    })
}

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(x, dof / 2.0, 0.5).clamp(0.0, 1.0)
}

/// CDF of Student's t.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, dof);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// I_x(a, b) via Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The fraction converges fast on this side; use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_fraction(1.0 - x, b, a) / b
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        for num in [
            m * (b - m) * x / ((a + m2 - 1.0) * (a + m2)),
            -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0)),
        ] {
            d = 1.0 + num * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + num / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS && num < 0.0 {
                return h;
            }
        }
    }
    h
}

/// A probability vector, normalized on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probabilities: Vec<f64>,
}

impl Distribution {
    pub fn new(weights: impl Into<Vec<f64>>) -> Result<Self> {
        let mut p = weights.into();
        if p.is_empty() {
            return Err(Error::Domain("empty distribution".into()));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = p.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("distribution has no mass".into()));
        }
        if (total - 1.0).abs() > 1e-12 {
            p.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Self { probabilities: p })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

pub const DEFAULT_KL_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum KlMode {
    /// Report infinity when q has zeros under p's support.
    Exact,
    /// Add epsilon to every q entry and renormalize.
    Smoothed { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlResult {
    pub nats: f64,
    /// nats * 100.
    pub percent: f64,
    pub infinite: bool,
    pub mode: KlMode,
}

/// KL(p || q) in nats.
pub fn kl_divergence(p: &Distribution, q: &Distribution, mode: KlMode) -> Result<KlResult> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    let qs: Vec<f64> = match mode {
        KlMode::Exact => q.probabilities.clone(),
        KlMode::Smoothed { epsilon } => {
            if epsilon.is_nan() || epsilon <= 0.0 {
                return Err(Error::Domain("smoothing epsilon must be positive".into()));
            }
            let total = 1.0 + epsilon * q.len() as f64;
            q.probabilities.iter().map(|v| (v + epsilon) / total).collect()
        }
    };
    let mut nats = 0.0;
    let mut infinite = false;
    for (&pi, &qi) in p.probabilities.iter().zip(&qs) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            infinite = true;
            continue;
        }
        nats += pi * (pi / qi).ln();
    }
    if infinite {
        nats = f64::INFINITY;
    }
    // Rounding can leave a tiny negative sum for near-equal inputs.
    let nats = if nats < 0.0 { 0.0 } else { nats };
    Ok(KlResult {
        nats,
        percent: nats * 100.0,
        infinite,
        mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub ratio: f64,
    pub welch: Option<WelchResult>,
}

/// Ratio of sample means, with a Welch test when both samples support one.
pub fn attention_contrast(a: &Sample, b: &Sample) -> Result<ContrastResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("attention_contrast needs non-empty samples".into()));
    }
    let (ma, mb) = (a.mean(), b.mean());
    if mb == 0.0 {
        return Err(Error::Domain(format!("sample {:?} has zero mean", b.label)));
    }
    if ma < 0.0 || mb < 0.0 {
        return Err(Error::Domain("attention means must be positive".into()));
    }
    let welch = if a.len() >= 2 && b.len() >= 2 {
        match welch_t(a, b) {
            Ok(w) => Some(w),
            Err(Error::DegenerateSample(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(ContrastResult { ratio: ma / mb, welch })
}
