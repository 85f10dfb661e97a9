//! Online false discovery rate control with decaying memory.
//!
//! The rejection level `α_f` follows a γ-investing rule: a floor
//! `α η max(γ_f, 1 - δ)` plus, for every past rejection at frame `ρ`, a
//! reward `α δ^(f-ρ) γ_(f-ρ)`. Detection quality is tracked with δ-discounted
//! counts of declared, false, true, and correct anomalies.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::evalue::EValue;

/// Partial-sum length used before switching to the Euler–Maclaurin tail.
const DIRECT_TERMS: u64 = 1_000_000;

/// Rewards smaller than this are dropped from the threshold sum.
const NEGLIGIBLE_REWARD: f64 = 1e-15;

/// Unnormalized γ shape: `ln(max(f, 2)) / (f exp(sqrt(ln f)))`.
fn gamma_shape(f: f64) -> f64 {
    let lf = f.ln();
    f.max(2.0).ln() / (f * lf.sqrt().exp())
}

/// `∫_x^∞ gamma_shape`. With `v = sqrt(ln x)` the integrand becomes
/// `2 v^3 e^{-v}`, whose antiderivative is closed-form.
fn gamma_shape_tail_integral(x: f64) -> f64 {
    let v = x.ln().sqrt();
    2.0 * (-v).exp() * (((v + 3.0) * v + 6.0) * v + 6.0)
}

/// Normalizing constant `c` such that `Σ_{f≥1} c · gamma_shape(f) = 1`.
///
/// Direct summation of the first terms plus an Euler–Maclaurin tail; the
/// neglected remainder is of order `gamma_shape(N) / N^3`.
pub fn normalization_constant() -> f64 {
    static CONSTANT: OnceLock<f64> = OnceLock::new();
    *CONSTANT.get_or_init(|| {
        let n = DIRECT_TERMS as f64;
        let head: f64 = (1..DIRECT_TERMS).map(|f| gamma_shape(f as f64)).sum();
        let g = gamma_shape(n);
        let ln_n = n.ln();
        let dg = g / n * (1.0 / ln_n - 1.0 - 0.5 / ln_n.sqrt());
        1.0 / (head + gamma_shape_tail_integral(n) + 0.5 * g - dg / 12.0)
    })
}

/// The normalized γ sequence, memoized up to a horizon.
#[derive(Debug, Clone)]
pub struct GammaSequence {
    norm_const: f64,
    memo: Vec<f64>,
}

impl GammaSequence {
    pub fn new(horizon: u64) -> Self {
        let norm_const = normalization_constant();
        let memo = (1..=horizon).map(|f| norm_const * gamma_shape(f as f64)).collect();
        Self { norm_const, memo }
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// `γ_f`, zero for `f <= 0`.
    pub fn at(&self, f: i64) -> f64 {
        if f <= 0 {
            return 0.0;
        }
        match self.memo.get((f - 1) as usize) {
            Some(&g) => g,
            None => self.norm_const * gamma_shape(f as f64),
        }
    }
}

/// γ-investing controller producing the rejection level `α_f`.
#[derive(Debug, Clone)]
pub struct ThresholdController {
    alpha: f64,
    eta: f64,
    delta: f64,
    gamma: Arc<GammaSequence>,
    rejection_times: Vec<u64>,
    // Rejections before this index contribute less than NEGLIGIBLE_REWARD.
    first_active: usize,
}

impl ThresholdController {
    pub fn new(alpha: f64, eta: f64, delta: f64, gamma: Arc<GammaSequence>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("{alpha} is not in (0, 1)")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid("eta", format!("{eta} must be positive")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("{delta} is not in (0, 1)")));
        }
        Ok(Self { alpha, eta, delta, gamma, rejection_times: Vec::new(), first_active: 0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rejection_times(&self) -> &[u64] {
        &self.rejection_times
    }

    /// Rejection level for frame `f`, using only rejections strictly before `f`.
    pub fn next_threshold(&mut self, f: u64) -> f64 {
        let floor = self.alpha * self.eta * self.gamma.at(f as i64).max(1.0 - self.delta);
        let mut rewards = 0.0;
        let mut first_active = self.first_active;
        for (i, &rho) in self.rejection_times.iter().enumerate().skip(self.first_active) {
            if rho >= f {
                break;
            }
            let lag = f - rho;
            let term = self.delta.powi(lag.min(i32::MAX as u64) as i32) * self.gamma.at(lag as i64);
            // Terms shrink with the lag, so the oldest ones drop out first.
            if term < NEGLIGIBLE_REWARD && i == first_active {
                first_active += 1;
                continue;
            }
            rewards += term;
        }
        self.first_active = first_active;
        floor + self.alpha * rewards
    }

    /// Records a rejection at frame `f`; frames must be strictly increasing.
    pub fn record_rejection(&mut self, f: u64) -> Result<()> {
        if let Some(&last) = self.rejection_times.last() {
            if f <= last {
                return Err(Error::invalid("rejection frame", format!("{f} does not follow {last}")));
            }
        }
        self.rejection_times.push(f);
        Ok(())
    }
}

/// How the per-frame rejection level is chosen.
#[derive(Debug, Clone)]
pub enum ThresholdRule {
    /// `α_f = α` at every frame. No FDR guarantee.
    Fixed {
        alpha: f64,
    },
    Dynamic(ThresholdController),
}

impl ThresholdRule {
    pub fn fixed(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid("alpha", format!("{alpha} is not in (0, 1]")));
        }
        Ok(ThresholdRule::Fixed { alpha })
    }

    pub fn level(&mut self, f: u64) -> f64 {
        match self {
            ThresholdRule::Fixed { alpha } => *alpha,
            ThresholdRule::Dynamic(ctrl) => ctrl.next_threshold(f),
        }
    }

    pub fn observe(&mut self, f: u64, rejected: bool) -> Result<()> {
        match self {
            ThresholdRule::Dynamic(ctrl) if rejected => ctrl.record_rejection(f),
            _ => Ok(()),
        }
    }
}

/// Declares an anomaly iff `e > 1 / α_f`; ties are not rejections.
pub fn decide(evalue: EValue, alpha_f: f64) -> bool {
    evalue.log() > -alpha_f.ln()
}

/// Per-run instantaneous ratios whose across-run means estimate FDR_f and TDR_f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRatios {
    pub fdr: f64,
    pub tdr: f64,
}

/// δ-discounted detection counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayedMetrics {
    delta: f64,
    declared: f64,
    false_discoveries: f64,
    anomalies: f64,
    true_discoveries: f64,
}

impl DecayedMetrics {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("{delta} is not in (0, 1)")));
        }
        Ok(Self { delta, declared: 0.0, false_discoveries: 0.0, anomalies: 0.0, true_discoveries: 0.0 })
    }

    pub fn update(&mut self, decision: bool, state: bool) -> FrameRatios {
        let d = self.delta;
        let indicator = |b: bool| if b { 1.0 } else { 0.0 };
        self.declared = d * self.declared + indicator(decision);
        self.false_discoveries = d * self.false_discoveries + indicator(decision && !state);
        self.anomalies = d * self.anomalies + indicator(state);
        self.true_discoveries = d * self.true_discoveries + indicator(decision && state);
        self.ratios()
    }

    pub fn ratios(&self) -> FrameRatios {
        FrameRatios {
            fdr: self.false_discoveries / self.declared.max(1.0),
            tdr: self.true_discoveries / self.anomalies.max(1.0),
        }
    }

    /// `Â_f`
    pub fn declared(&self) -> f64 {
        self.declared
    }

    /// `F_f`
    pub fn false_discoveries(&self) -> f64 {
        self.false_discoveries
    }

    /// `A_f`
    pub fn anomalies(&self) -> f64 {
        self.anomalies
    }

    /// `T_f`
    pub fn true_discoveries(&self) -> f64 {
        self.true_discoveries
    }
}
