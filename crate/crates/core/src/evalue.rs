//! Plug-in e-values built from received spike sequences.
//!
//! Every quantity is kept as a natural logarithm: an all-spike frame at the
//! default parameters already gives `e = 10^50`.

use std::cmp::Ordering;

use crate::env::{ChannelModel, SpikeSequence};
use crate::error::{check_probability, Error, Result};

/// An e-value stored as `ln e`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EValue(f64);

impl EValue {
    pub const ONE: EValue = EValue(0.0);

    pub fn from_log(log_e: f64) -> Self {
        EValue(log_e)
    }

    /// Panics on negative or NaN input.
    pub fn from_linear(e: f64) -> Self {
        assert!(e >= 0.0, "e-values are non-negative, got {e}");
        EValue(e.ln())
    }

    pub fn log(self) -> f64 {
        self.0
    }

    /// Linear value; overflows to `inf` beyond `ln e ≈ 709`.
    pub fn value(self) -> f64 {
        self.0.exp()
    }
}

/// Mean of the received bits.
pub fn estimate_spike_rate(rx: &SpikeSequence) -> Result<f64> {
    if rx.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(rx.spike_count() as f64 / rx.len() as f64)
}

/// Probability that the reader receives a spike in a slot under the normal
/// state: `q0 (1 - eps10) + (1 - q0) eps01`.
pub fn null_receive_prob(q0: f64, channel: &ChannelModel) -> f64 {
    channel.receive_prob(q0)
}

/// Maximum-likelihood anomalous rate under the constraint `q1 >= q0`.
pub fn ml_anomalous_rate(q0: f64, q_hat: f64) -> f64 {
    q0.max(q_hat)
}

/// Null model of one node as seen through the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullReceiveModel {
    q0: f64,
    channel: ChannelModel,
    psi0: f64,
}

impl NullReceiveModel {
    /// Fails when the null receive probability is 0 or 1, where the
    /// likelihood ratio is undefined.
    pub fn new(q0: f64, channel: ChannelModel) -> Result<Self> {
        check_probability("q0", q0)?;
        let psi0 = null_receive_prob(q0, &channel);
        if !(psi0 > 0.0 && psi0 < 1.0) {
            return Err(Error::DegenerateNull { psi0 });
        }
        Ok(Self { q0, channel, psi0 })
    }

    pub fn psi0(&self) -> f64 {
        self.psi0
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    /// Plug-in likelihood-ratio e-value of one received sequence.
    pub fn evalue(&self, rx: &SpikeSequence) -> Result<EValue> {
        let q_hat = estimate_spike_rate(rx)?;
        let ones = rx.spike_count() as f64;
        let zeros = (rx.len() - rx.spike_count()) as f64;
        let psi1 = self.channel.receive_prob(ml_anomalous_rate(self.q0, q_hat));
        let log_e =
            weighted_log_ratio(ones, psi1, self.psi0)? + weighted_log_ratio(zeros, 1.0 - psi1, 1.0 - self.psi0)?;
        Ok(EValue(log_e))
    }
}

// `weight * ln(num / den)` with the convention `0 * ln 0 = 0`.
fn weighted_log_ratio(weight: f64, num: f64, den: f64) -> Result<f64> {
    if weight == 0.0 {
        return Ok(0.0);
    }
    if num <= 0.0 {
        return Err(Error::DegenerateLikelihood);
    }
    if num == den {
        return Ok(0.0);
    }
    Ok(weight * (num / den).ln())
}

/// Convenience wrapper building the null model on the fly.
pub fn plugin_evalue(rx: &SpikeSequence, q0: f64, channel: &ChannelModel) -> Result<EValue> {
    NullReceiveModel::new(q0, *channel)?.evalue(rx)
}

/// Arithmetic mean of the e-values, evaluated with log-sum-exp.
pub fn merge_evalues(values: &[EValue]) -> Result<EValue> {
    let max = values
        .iter()
        .map(|v| v.0)
        .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
        .ok_or(Error::EmptyMerge)?;
    if values.len() == 1 || max == f64::NEG_INFINITY || max == f64::INFINITY {
        return Ok(EValue(max));
    }
    let sum: f64 = values.iter().map(|v| (v.0 - max).exp()).sum();
    Ok(EValue(max + sum.ln() - (values.len() as f64).ln()))
}
