//! Environment model: the binary anomaly state, per-node Bernoulli spike
//! sources, the binary asymmetric uplink channel, and seeded random streams.

use rand::distributions::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_probability, Error, Result};

/// Source of the per-frame anomaly state `S_f`.
#[derive(Debug, Clone, PartialEq)]
pub enum StateProcess {
    /// `S_f ~ Bern(anomaly_prob)`, i.i.d. across frames.
    Iid { anomaly_prob: f64 },
    /// A fixed state sequence; entry `f - 1` is the state of frame `f`.
    Explicit(Vec<bool>),
}

impl StateProcess {
    pub fn iid(anomaly_prob: f64) -> Result<Self> {
        check_probability("pi1", anomaly_prob)?;
        Ok(StateProcess::Iid { anomaly_prob })
    }

    /// Builds an explicit sequence from 0/1 values.
    pub fn explicit(states: &[u8]) -> Result<Self> {
        states
            .iter()
            .map(|&s| match s {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::invalid("states", format!("state {other} is not binary"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(StateProcess::Explicit)
    }

    /// Draws (or looks up) the state of frame `f` (1-based).
    pub fn sample<R: Rng + ?Sized>(&self, frame: u64, rng: &mut R) -> Result<bool> {
        if frame == 0 {
            return Err(Error::invalid("frame", "frames are numbered from 1"));
        }
        match self {
            StateProcess::Iid { anomaly_prob } => Ok(rng.gen_bool(*anomaly_prob)),
            StateProcess::Explicit(seq) => {
                seq.get((frame - 1) as usize).copied().ok_or(Error::FrameOutOfRange { frame, len: seq.len() })
            }
        }
    }
}

/// Spiking probabilities of one node under the normal and anomalous state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorProfile {
    q0: f64,
    q1: f64,
}

impl SensorProfile {
    pub fn new(q0: f64, q1: f64) -> Result<Self> {
        check_probability("q0", q0)?;
        check_probability("q1", q1)?;
        if q1 < q0 {
            return Err(Error::invalid("q1", format!("anomalous rate {q1} is below normal rate {q0}")));
        }
        Ok(Self { q0, q1 })
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn rate(&self, anomalous: bool) -> f64 {
        if anomalous {
            self.q1
        } else {
            self.q0
        }
    }

    /// Draws `slots` spikes at the rate selected by `anomalous`.
    pub fn generate_spikes<R: Rng + ?Sized>(
        &self,
        anomalous: bool,
        slots: usize,
        rng: &mut R,
    ) -> Result<SpikeSequence> {
        if slots == 0 {
            return Err(Error::EmptySequence);
        }
        // Rates are validated at construction so this cannot fail.
        let spike = Bernoulli::new(self.rate(anomalous)).expect("validated rate");
        Ok(SpikeSequence { bits: (0..slots).map(|_| spike.sample(rng)).collect() })
    }
}

/// Binary asymmetric channel with flip probabilities `0 -> 1` and `1 -> 0`.
///
/// Both flips may be anything in `[0, 1]`; degenerate channels are rejected
/// later, where the null receive probability becomes 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelModel {
    eps01: f64,
    eps10: f64,
}

impl ChannelModel {
    pub const IDENTITY: ChannelModel = ChannelModel { eps01: 0.0, eps10: 0.0 };

    pub fn new(eps01: f64, eps10: f64) -> Result<Self> {
        check_probability("eps01", eps01)?;
        check_probability("eps10", eps10)?;
        Ok(Self { eps01, eps10 })
    }

    pub fn eps01(&self) -> f64 {
        self.eps01
    }

    pub fn eps10(&self) -> f64 {
        self.eps10
    }

    /// Probability that a slot is received as a spike when the source spikes
    /// with probability `q`.
    pub fn receive_prob(&self, q: f64) -> f64 {
        q * (1.0 - self.eps10) + (1.0 - q) * self.eps01
    }

    /// Passes `tx` through the channel, flipping each bit independently.
    pub fn transmit<R: Rng + ?Sized>(&self, tx: &SpikeSequence, rng: &mut R) -> SpikeSequence {
        if self.eps01 == 0.0 && self.eps10 == 0.0 {
            return tx.clone();
        }
        let flip01 = Bernoulli::new(self.eps01).expect("validated eps01");
        let flip10 = Bernoulli::new(self.eps10).expect("validated eps10");
        let bits = tx.bits.iter().map(|&bit| if bit { !flip10.sample(rng) } else { flip01.sample(rng) }).collect();
        SpikeSequence { bits }
    }
}

/// Spike train of one node over the `L` uplink slots of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeSequence {
    bits: Vec<bool>,
}

impl SpikeSequence {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Builds a sequence from 0/1 values.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::invalid("bits", format!("{other} is not a bit"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn ones(len: usize) -> Self {
        Self { bits: vec![true; len] }
    }

    /// `count` leading ones followed by zeros, `len` slots in total.
    pub fn with_spikes(len: usize, count: usize) -> Self {
        Self { bits: (0..len).map(|i| i < count).collect() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn spike_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// What a derived random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Profiles = 1,
    State = 2,
    Spikes = 3,
    Channel = 4,
    Scheduler = 5,
}

/// Master seed from which independent streams are derived per
/// `(run, frame, node, purpose)`.
///
/// Streams never share state, so a scheduler that queries different nodes
/// leaves every other stream untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomSource {
    seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, run: u64, frame: u64, node: u64, purpose: Purpose) -> ChaCha8Rng {
        let mut key = splitmix64(self.seed);
        for part in [run, frame, node, purpose as u64] {
            key = splitmix64(key ^ part);
        }
        ChaCha8Rng::seed_from_u64(key)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        RandomSource::new(seed).stream(0, 0, 0, Purpose::State)
    }

    #[test]
    fn degenerate_state_probabilities() {
        let mut r = rng(1);
        let never = StateProcess::iid(0.0).unwrap();
        let always = StateProcess::iid(1.0).unwrap();
        for f in 1..=1000 {
            assert!(!never.sample(f, &mut r).unwrap());
            assert!(always.sample(f, &mut r).unwrap());
        }
    }

    #[test]
    fn iid_state_frequency() {
        let proc = StateProcess::iid(0.05).unwrap();
        let src = RandomSource::new(11);
        let n = 1_000_000u64;
        let hits = (1..=n).filter(|&f| proc.sample(f, &mut src.stream(0, f, 0, Purpose::State)).unwrap()).count();
        let mean = hits as f64 / n as f64;
        assert!((mean - 0.05).abs() < 0.001, "mean {mean}");
    }

    #[test]
    fn explicit_sequence_lookup_and_range() {
        let proc = StateProcess::explicit(&[0, 1, 1]).unwrap();
        let mut r = rng(0);
        assert!(!proc.sample(1, &mut r).unwrap());
        assert!(proc.sample(3, &mut r).unwrap());
        assert_eq!(proc.sample(4, &mut r), Err(Error::FrameOutOfRange { frame: 4, len: 3 }));
        assert!(proc.sample(0, &mut r).is_err());
        assert!(StateProcess::explicit(&[0, 2]).is_err());
        assert!(StateProcess::iid(1.5).is_err());
    }

    #[test]
    fn profile_invariants() {
        assert!(SensorProfile::new(0.2, 0.1).is_err());
        assert!(SensorProfile::new(-0.1, 0.1).is_err());
        assert!(SensorProfile::new(0.1, 1.1).is_err());
        assert!(SensorProfile::new(0.1, 0.1).is_ok());
    }

    #[test]
    fn degenerate_spike_rates() {
        let mut r = rng(2);
        let p = SensorProfile::new(0.0, 1.0).unwrap();
        assert_eq!(p.generate_spikes(false, 50, &mut r).unwrap(), SpikeSequence::zeros(50));
        assert_eq!(p.generate_spikes(true, 50, &mut r).unwrap(), SpikeSequence::ones(50));
        assert_eq!(p.generate_spikes(true, 0, &mut r), Err(Error::EmptySequence));
    }

    #[test]
    fn pooled_spike_fraction() {
        let p = SensorProfile::new(0.1, 0.5).unwrap();
        let src = RandomSource::new(3);
        let frames = 100_000u64;
        let spikes: usize = (0..frames)
            .map(|f| {
                let s = p.generate_spikes(false, 50, &mut src.stream(0, f, 0, Purpose::Spikes)).unwrap();
                assert_eq!(s.len(), 50);
                s.spike_count()
            })
            .sum();
        let frac = spikes as f64 / (frames * 50) as f64;
        assert!((frac - 0.1).abs() < 0.002, "fraction {frac}");
    }

    #[test]
    fn identity_and_deterministic_channels() {
        let mut r = rng(4);
        let tx = SpikeSequence::from_bits(&[1, 0, 0, 1, 1, 0]).unwrap();
        assert_eq!(ChannelModel::IDENTITY.transmit(&tx, &mut r), tx);
        let eraser = ChannelModel::new(0.0, 1.0).unwrap();
        assert_eq!(eraser.transmit(&SpikeSequence::ones(20), &mut r), SpikeSequence::zeros(20));
        assert!(ChannelModel::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn false_spike_fraction() {
        let ch = ChannelModel::new(0.02, 0.0).unwrap();
        let mut r = rng(5);
        let rx = ch.transmit(&SpikeSequence::zeros(100_000), &mut r);
        let frac = rx.spike_count() as f64 / rx.len() as f64;
        assert!((frac - 0.02).abs() < 0.002, "fraction {frac}");
    }

    #[test]
    fn end_to_end_receive_rate_matches_closed_form() {
        let q0 = 0.1;
        let profile = SensorProfile::new(q0, 0.4).unwrap();
        let ch = ChannelModel::new(0.03, 0.2).unwrap();
        let expected = q0 * (1.0 - 0.2) + (1.0 - q0) * 0.03;
        let src = RandomSource::new(6);
        let frames = 20_000u64;
        let slots = 50usize;
        let mut ones = 0usize;
        for f in 0..frames {
            let tx = profile.generate_spikes(false, slots, &mut src.stream(0, f, 0, Purpose::Spikes)).unwrap();
            ones += ch.transmit(&tx, &mut src.stream(0, f, 0, Purpose::Channel)).spike_count();
        }
        let n = (frames as usize * slots) as f64;
        let sigma = (expected * (1.0 - expected) / n).sqrt();
        let got = ones as f64 / n;
        assert!((got - expected).abs() < 3.0 * sigma, "got {got}, expected {expected} ± {}", 3.0 * sigma);
        assert!((ch.receive_prob(q0) - expected).abs() < 1e-15);
    }

    #[test]
    fn frame_replay_is_bit_identical() {
        let src = RandomSource::new(99);
        let profile = SensorProfile::new(0.1, 0.6).unwrap();
        let ch = ChannelModel::new(0.05, 0.05).unwrap();
        let proc = StateProcess::iid(0.5).unwrap();
        let frame = |f: u64| {
            let s = proc.sample(f, &mut src.stream(2, f, 0, Purpose::State)).unwrap();
            let tx = profile.generate_spikes(s, 50, &mut src.stream(2, f, 3, Purpose::Spikes)).unwrap();
            (s, ch.transmit(&tx, &mut src.stream(2, f, 3, Purpose::Channel)))
        };
        for f in 1..50 {
            assert_eq!(frame(f), frame(f));
        }
    }

    #[test]
    fn streams_differ_by_path() {
        let src = RandomSource::new(7);
        let a: u64 = src.stream(0, 1, 0, Purpose::Spikes).gen();
        let b: u64 = src.stream(0, 1, 1, Purpose::Spikes).gen();
        let c: u64 = src.stream(0, 1, 0, Purpose::Channel).gen();
        let d: u64 = src.stream(1, 1, 0, Purpose::Spikes).gen();
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, src.stream(0, 1, 0, Purpose::Spikes).gen::<u64>());
    }
}
