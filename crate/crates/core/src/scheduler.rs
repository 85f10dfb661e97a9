//! Node scheduling: track-and-stop with forced exploration, its multi-slot
//! extension, and a uniform random baseline.

use rand::Rng;

use crate::allocation::{optimal_weights, WeightVector};
use crate::error::{Error, Result};

/// Pull counts and running mean receive rates of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pull_counts: Vec<u64>,
    rate_means: Vec<f64>,
    c_max: usize,
}

impl SchedulerState {
    pub fn new(nodes: usize, c_max: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::invalid("k", "at least one node is required"));
        }
        if c_max == 0 || c_max > nodes {
            return Err(Error::invalid("c_max", format!("{c_max} is not in 1..={nodes}")));
        }
        Ok(Self { pull_counts: vec![0; nodes], rate_means: vec![0.0; nodes], c_max })
    }

    pub fn nodes(&self) -> usize {
        self.pull_counts.len()
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    pub fn rate_means(&self) -> &[f64] {
        &self.rate_means
    }

    /// Folds one received rate estimate of `node` into its running mean.
    pub fn update(&mut self, node: usize, q_hat: f64) {
        self.pull_counts[node] += 1;
        let n = self.pull_counts[node] as f64;
        self.rate_means[node] += (q_hat - self.rate_means[node]) / n;
    }

    /// Non-excluded nodes pulled fewer than `sqrt(f) - K/2` times.
    pub fn forced_set(&self, frame: u64, excluded: &[usize]) -> Vec<usize> {
        let threshold = (frame as f64).sqrt() - self.nodes() as f64 / 2.0;
        (0..self.nodes()).filter(|k| !excluded.contains(k) && (self.pull_counts[*k] as f64) < threshold).collect()
    }

    /// Optimal allocation at the current means.
    pub fn weights(&self) -> Result<WeightVector> {
        optimal_weights(&self.rate_means)
    }

    /// Picks one node for frame `frame` among those not in `excluded`.
    pub fn select_one(&self, frame: u64, excluded: &[usize]) -> Result<usize> {
        let mut weights = None;
        self.select_with(frame, excluded, &mut weights)
    }

    /// Picks `c_max` distinct nodes by repeated [`select_one`](Self::select_one),
    /// each pick excluded from the next.
    pub fn select_many(&self, frame: u64) -> Result<Vec<usize>> {
        let mut chosen = Vec::with_capacity(self.c_max);
        let mut weights = None;
        for _ in 0..self.c_max {
            let next = self.select_with(frame, &chosen, &mut weights)?;
            chosen.push(next);
        }
        Ok(chosen)
    }

    // `weights` caches the allocation across the picks of one frame; the
    // state does not change between them.
    fn select_with(&self, frame: u64, excluded: &[usize], weights: &mut Option<WeightVector>) -> Result<usize> {
        let candidates = || (0..self.nodes()).filter(|k| !excluded.contains(k));
        if candidates().next().is_none() {
            return Err(Error::NoCandidates);
        }
        // Means are undefined before the first pull.
        if let Some(k) = candidates().find(|&k| self.pull_counts[k] == 0) {
            return Ok(k);
        }
        let forced = self.forced_set(frame, excluded);
        if let Some(&k) = forced.iter().min_by_key(|&&k| (self.pull_counts[k], k)) {
            return Ok(k);
        }
        if weights.is_none() {
            *weights = Some(self.weights()?);
        }
        let w = weights.as_ref().expect("weights computed above");
        let f = frame as f64;
        let deficit = |k: usize| self.pull_counts[k] as f64 - f * w.get(k);
        let mut best = None::<(usize, f64)>;
        for k in candidates() {
            let d = deficit(k);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        Ok(best.expect("candidates are non-empty").0)
    }
}

/// Uniform sample of `c_max` distinct nodes out of `nodes`.
pub fn select_random<R: Rng + ?Sized>(nodes: usize, c_max: usize, rng: &mut R) -> Result<Vec<usize>> {
    if c_max > nodes {
        return Err(Error::invalid("c_max", format!("{c_max} exceeds the {nodes} available nodes")));
    }
    Ok(rand::seq::index::sample(rng, nodes, c_max).into_vec())
}
