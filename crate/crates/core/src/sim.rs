//! Frame loop and Monte-Carlo replication.
//!
//! Each frame: pick the nodes to query, draw the environment state, let
//! every queried node sense `L` slots and transmit them over the channel,
//! turn the received spikes into a merged e-value, test it against the
//! current rejection level, then update the threshold history, the scheduler
//! statistics and the decayed FDR/TDR counts.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::env::{ChannelModel, Purpose, RandomSource, SensorProfile, StateProcess};
use crate::error::{check_probability, Error, Result};
use crate::evalue::{estimate_spike_rate, merge_evalues, NullReceiveModel};
use crate::fdr::{decide, DecayedMetrics, GammaSequence, ThresholdController, ThresholdRule};
use crate::scheduler::{select_random, SchedulerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    TrackAndStop,
    Random,
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "track_and_stop" => Ok(SchedulerKind::TrackAndStop),
            "random" => Ok(SchedulerKind::Random),
            other => Err(Error::invalid("scheduler", format!("unknown scheduler `{other}`"))),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::TrackAndStop => "track_and_stop",
            SchedulerKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdKind {
    Dynamic,
    Fixed,
}

impl FromStr for ThresholdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(ThresholdKind::Dynamic),
            "fixed" => Ok(ThresholdKind::Fixed),
            other => Err(Error::invalid("threshold", format!("unknown threshold rule `{other}`"))),
        }
    }
}

impl fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdKind::Dynamic => "dynamic",
            ThresholdKind::Fixed => "fixed",
        })
    }
}

/// Full description of one Monte-Carlo experiment.
///
/// [`Default`] gives the reference setting: 5 nodes, 50 slots, α = 0.1,
/// η = δ = 0.99, q0 = 0.1, π1 = 0.05, Δ_max = 0.5, an error-free channel,
/// one node per frame, 1000 runs of 1000 frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nodes: usize,
    pub frames: u64,
    pub slots: usize,
    pub alpha: f64,
    pub eta: f64,
    pub delta: f64,
    pub pi1: f64,
    pub q0: f64,
    pub delta_max: f64,
    pub eps01: f64,
    pub eps10: f64,
    pub c_max: usize,
    pub runs: usize,
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub threshold: ThresholdKind,
    /// Fixed anomalous rates, one per node, replacing the random draw.
    pub q1_overrides: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nodes: 5,
            frames: 1000,
            slots: 50,
            alpha: 0.1,
            eta: 0.99,
            delta: 0.99,
            pi1: 0.05,
            q0: 0.1,
            delta_max: 0.5,
            eps01: 0.0,
            eps10: 0.0,
            c_max: 1,
            runs: 1000,
            seed: 0,
            scheduler: SchedulerKind::TrackAndStop,
            threshold: ThresholdKind::Dynamic,
            q1_overrides: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::invalid("k", "at least one node is required"));
        }
        if self.frames == 0 {
            return Err(Error::invalid("frames", "at least one frame is required"));
        }
        if self.slots == 0 {
            return Err(Error::invalid("l", "at least one uplink slot is required"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs", "at least one run is required"));
        }
        if self.c_max == 0 || self.c_max > self.nodes {
            return Err(Error::invalid("c_max", format!("{} is not in 1..={}", self.c_max, self.nodes)));
        }
        check_probability("alpha", self.alpha)?;
        check_probability("pi1", self.pi1)?;
        check_probability("q0", self.q0)?;
        check_probability("delta_max", self.delta_max)?;
        if self.q0 + self.delta_max > 1.0 {
            return Err(Error::invalid(
                "delta_max",
                format!("q0 + delta_max = {} exceeds 1", self.q0 + self.delta_max),
            ));
        }
        let channel = ChannelModel::new(self.eps01, self.eps10)?;
        NullReceiveModel::new(self.q0, channel)?;
        if let Some(q1) = &self.q1_overrides {
            if q1.len() != self.nodes {
                return Err(Error::invalid("q1", format!("{} rates given for {} nodes", q1.len(), self.nodes)));
            }
            for &q in q1 {
                SensorProfile::new(self.q0, q)?;
            }
        }
        // Threshold parameters are checked by their constructors.
        match self.threshold {
            ThresholdKind::Fixed => ThresholdRule::fixed(self.alpha).map(drop),
            ThresholdKind::Dynamic => {
                ThresholdController::new(self.alpha, self.eta, self.delta, Arc::new(GammaSequence::new(0))).map(drop)
            }
        }?;
        DecayedMetrics::new(self.delta).map(drop)
    }

    pub fn channel(&self) -> Result<ChannelModel> {
        ChannelModel::new(self.eps01, self.eps10)
    }
}

/// Sensor profiles of one replicate: shared `q0`, and `q1 ~ U[q0, q0 + Δ_max]`
/// per node unless overridden.
pub fn draw_profiles<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<Vec<SensorProfile>> {
    match &cfg.q1_overrides {
        Some(q1) if q1.len() != cfg.nodes => {
            Err(Error::invalid("q1", format!("{} rates given for {} nodes", q1.len(), cfg.nodes)))
        }
        Some(q1) => q1.iter().map(|&q| SensorProfile::new(cfg.q0, q)).collect(),
        None => (0..cfg.nodes)
            .map(|_| {
                let q1 = cfg.q0 + cfg.delta_max * rng.gen::<f64>();
                SensorProfile::new(cfg.q0, q1.min(1.0))
            })
            .collect(),
    }
}

/// Everything observable about one frame of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub frame: u64,
    pub scheduled: Vec<usize>,
    pub state: bool,
    pub decision: bool,
    pub alpha_f: f64,
    pub log_evalue: f64,
    pub fdr_ratio: f64,
    pub tdr_ratio: f64,
}

/// Mutable state of a single simulation run.
#[derive(Debug, Clone)]
pub struct Replicate {
    run: u64,
    slots: usize,
    scheduler_kind: SchedulerKind,
    source: RandomSource,
    profiles: Vec<SensorProfile>,
    states: StateProcess,
    channel: ChannelModel,
    null: NullReceiveModel,
    threshold: ThresholdRule,
    metrics: DecayedMetrics,
    scheduler: SchedulerState,
}

impl Replicate {
    pub fn new(cfg: &ExperimentConfig, run: u64, gamma: Arc<GammaSequence>) -> Result<Self> {
        let states = StateProcess::iid(cfg.pi1)?;
        Self::with_states(cfg, run, gamma, states)
    }

    /// Same as [`new`](Self::new) but with an explicit state process.
    pub fn with_states(
        cfg: &ExperimentConfig,
        run: u64,
        gamma: Arc<GammaSequence>,
        states: StateProcess,
    ) -> Result<Self> {
        cfg.validate()?;
        let source = RandomSource::new(cfg.seed);
        let profiles = draw_profiles(cfg, &mut source.stream(run, 0, 0, Purpose::Profiles))?;
        let channel = cfg.channel()?;
        let threshold = match cfg.threshold {
            ThresholdKind::Fixed => ThresholdRule::fixed(cfg.alpha)?,
            ThresholdKind::Dynamic => {
                ThresholdRule::Dynamic(ThresholdController::new(cfg.alpha, cfg.eta, cfg.delta, gamma)?)
            }
        };
        Ok(Self {
            run,
            slots: cfg.slots,
            scheduler_kind: cfg.scheduler,
            source,
            profiles,
            states,
            channel,
            null: NullReceiveModel::new(cfg.q0, channel)?,
            threshold,
            metrics: DecayedMetrics::new(cfg.delta)?,
            scheduler: SchedulerState::new(cfg.nodes, cfg.c_max)?,
        })
    }

    pub fn profiles(&self) -> &[SensorProfile] {
        &self.profiles
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.scheduler
    }

    pub fn metrics(&self) -> &DecayedMetrics {
        &self.metrics
    }

    pub fn run_frame(&mut self, frame: u64) -> Result<FrameTrace> {
        let stream = |node: u64, purpose| self.source.stream(self.run, frame, node, purpose);
        let scheduled = match self.scheduler_kind {
            SchedulerKind::TrackAndStop => self.scheduler.select_many(frame)?,
            SchedulerKind::Random => {
                select_random(self.scheduler.nodes(), self.scheduler.c_max(), &mut stream(0, Purpose::Scheduler))?
            }
        };
        let state = self.states.sample(frame, &mut stream(0, Purpose::State))?;

        let mut evalues = Vec::with_capacity(scheduled.len());
        let mut rates = Vec::with_capacity(scheduled.len());
        for &k in &scheduled {
            let node = k as u64;
            let tx = self.profiles[k].generate_spikes(state, self.slots, &mut stream(node, Purpose::Spikes))?;
            let rx = self.channel.transmit(&tx, &mut stream(node, Purpose::Channel));
            rates.push(estimate_spike_rate(&rx)?);
            evalues.push(self.null.evalue(&rx)?);
        }
        let merged = merge_evalues(&evalues)?;

        let alpha_f = self.threshold.level(frame);
        let decision = decide(merged, alpha_f);
        self.threshold.observe(frame, decision)?;
        for (&k, &q_hat) in scheduled.iter().zip(&rates) {
            self.scheduler.update(k, q_hat);
        }
        let ratios = self.metrics.update(decision, state);

        Ok(FrameTrace {
            frame,
            scheduled,
            state,
            decision,
            alpha_f,
            log_evalue: merged.log(),
            fdr_ratio: ratios.fdr,
            tdr_ratio: ratios.tdr,
        })
    }
}

/// Per-frame ratio series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub fdr: Vec<f64>,
    pub tdr: Vec<f64>,
    pub pull_counts: Vec<u64>,
}

/// Runs replicate `run` of `cfg` to completion.
pub fn run_replicate(cfg: &ExperimentConfig, run: u64, gamma: Arc<GammaSequence>) -> Result<RunSeries> {
    let mut rep = Replicate::new(cfg, run, gamma)?;
    let n = cfg.frames as usize;
    let (mut fdr, mut tdr) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for f in 1..=cfg.frames {
        let t = rep.run_frame(f)?;
        fdr.push(t.fdr_ratio);
        tdr.push(t.tdr_ratio);
    }
    Ok(RunSeries { fdr, tdr, pull_counts: rep.scheduler.pull_counts().to_vec() })
}

/// Full frame traces of one replicate.
pub fn trace_replicate(cfg: &ExperimentConfig, run: u64) -> Result<Vec<FrameTrace>> {
    let mut rep = Replicate::new(cfg, run, Arc::new(GammaSequence::new(cfg.frames)))?;
    (1..=cfg.frames).map(|f| rep.run_frame(f)).collect()
}

/// Across-run means and standard errors of the per-frame ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub runs: usize,
    pub fdr_mean: Vec<f64>,
    pub fdr_se: Vec<f64>,
    pub tdr_mean: Vec<f64>,
    pub tdr_se: Vec<f64>,
}

impl AggregateSeries {
    /// Reduces run series in the given order.
    pub fn from_runs(series: &[RunSeries]) -> Self {
        let frames = series.first().map_or(0, |s| s.fdr.len());
        let (fdr_mean, fdr_se) = mean_and_se(series, frames, |s| &s.fdr);
        let (tdr_mean, tdr_se) = mean_and_se(series, frames, |s| &s.tdr);
        Self { runs: series.len(), fdr_mean, fdr_se, tdr_mean, tdr_se }
    }

    pub fn frames(&self) -> usize {
        self.fdr_mean.len()
    }

    /// Largest mean FDR over all frames.
    pub fn max_fdr(&self) -> f64 {
        self.fdr_mean.iter().copied().fold(0.0, f64::max)
    }

    pub fn final_fdr(&self) -> f64 {
        *self.fdr_mean.last().expect("non-empty series")
    }

    pub fn final_tdr(&self) -> f64 {
        *self.tdr_mean.last().expect("non-empty series")
    }
}

fn mean_and_se(series: &[RunSeries], frames: usize, pick: impl Fn(&RunSeries) -> &Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = series.len() as f64;
    let mut mean = vec![0.0; frames];
    let mut m2 = vec![0.0; frames];
    // Welford, one run at a time in run order.
    for (i, s) in series.iter().enumerate() {
        let count = (i + 1) as f64;
        for (f, &x) in pick(s).iter().enumerate() {
            let d = x - mean[f];
            mean[f] += d / count;
            m2[f] += d * (x - mean[f]);
        }
    }
    let se = m2.iter().map(|&m| if n > 1.0 { (m / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 }).collect();
    (mean, se)
}

/// Runs all replicates of `cfg` and averages their ratio series.
///
/// Replicates run in parallel; the reduction follows run order, so the
/// output does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateSeries> {
    run_experiment_with_runs(cfg).map(|(agg, _)| agg)
}

/// [`run_experiment`] that also hands back the individual run series.
pub fn run_experiment_with_runs(cfg: &ExperimentConfig) -> Result<(AggregateSeries, Vec<RunSeries>)> {
    cfg.validate()?;
    let gamma = Arc::new(GammaSequence::new(cfg.frames));
    let series = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|run| run_replicate(cfg, run, gamma.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((AggregateSeries::from_runs(&series), series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(cfg: ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig { runs: 4, frames: 200, ..cfg }
    }

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = ExperimentConfig::default();
        let bad = [
            ExperimentConfig { c_max: 6, ..base.clone() },
            ExperimentConfig { q0: 0.6, delta_max: 0.5, ..base.clone() },
            ExperimentConfig { runs: 0, ..base.clone() },
            ExperimentConfig { frames: 0, ..base.clone() },
            ExperimentConfig { pi1: 1.2, ..base.clone() },
            ExperimentConfig { q0: 0.0, ..base.clone() },
            ExperimentConfig { delta: 1.0, ..base.clone() },
            ExperimentConfig { q1_overrides: Some(vec![0.2]), ..base.clone() },
            ExperimentConfig { q1_overrides: Some(vec![0.05; 5]), ..base },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn profile_draws() {
        let src = RandomSource::new(1);
        let cfg = ExperimentConfig { delta_max: 0.0, ..Default::default() };
        let p = draw_profiles(&cfg, &mut src.stream(0, 0, 0, Purpose::Profiles)).unwrap();
        assert!(p.iter().all(|p| p.q1() == 0.1 && p.q0() == 0.1));

        let cfg = ExperimentConfig { nodes: 2, q1_overrides: Some(vec![0.2, 0.4]), ..Default::default() };
        let p = draw_profiles(&cfg, &mut src.stream(0, 0, 0, Purpose::Profiles)).unwrap();
        assert_eq!((p[0].q1(), p[1].q1()), (0.2, 0.4));

        let cfg = ExperimentConfig { nodes: 3, q1_overrides: Some(vec![0.2, 0.4]), ..Default::default() };
        assert!(draw_profiles(&cfg, &mut src.stream(0, 0, 0, Purpose::Profiles)).is_err());

        let cfg = ExperimentConfig { nodes: 1, ..Default::default() };
        let mut r = src.stream(0, 0, 0, Purpose::Profiles);
        let n = 100_000;
        let mean = (0..n).map(|_| draw_profiles(&cfg, &mut r).unwrap()[0].q1()).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, 0.35, epsilon = 0.005);
    }

    #[test]
    fn silent_system_never_rejects() {
        // q0 = 0 would make the null degenerate, so the silent system is
        // exercised through an explicit all-normal state sequence with no
        // spikes received.
        let cfg = ExperimentConfig { q0: 1e-9, delta_max: 0.0, pi1: 0.0, ..small(Default::default()) };
        for t in trace_replicate(&cfg, 0).unwrap() {
            assert!(!t.state && !t.decision);
            assert_eq!(t.log_evalue, 0.0);
        }
    }

    #[test]
    fn all_ones_frame_is_rejected_by_fixed_threshold() {
        let cfg = ExperimentConfig {
            nodes: 1,
            threshold: ThresholdKind::Fixed,
            q1_overrides: Some(vec![1.0]),
            ..small(Default::default())
        };
        let mut rep = Replicate::with_states(
            &cfg,
            0,
            Arc::new(GammaSequence::new(10)),
            StateProcess::explicit(&[1, 1, 1]).unwrap(),
        )
        .unwrap();
        let t = rep.run_frame(1).unwrap();
        assert!(t.state && t.decision);
        assert_abs_diff_eq!(t.log_evalue, 50.0 * 10f64.ln(), epsilon = 1e-9);
        assert_eq!(t.alpha_f, 0.1);
    }

    #[test]
    fn one_node_per_frame_at_unit_capacity() {
        let cfg = ExperimentConfig { runs: 1, ..small(Default::default()) };
        for t in trace_replicate(&cfg, 0).unwrap() {
            assert_eq!(t.scheduled.len(), 1);
        }
    }

    #[test]
    fn pulls_are_conserved() {
        for (scheduler, c_max) in
            [(SchedulerKind::TrackAndStop, 1), (SchedulerKind::TrackAndStop, 2), (SchedulerKind::Random, 3)]
        {
            let cfg = small(ExperimentConfig { scheduler, c_max, ..Default::default() });
            let (_, runs) = run_experiment_with_runs(&cfg).unwrap();
            for r in runs {
                assert_eq!(r.pull_counts.iter().sum::<u64>(), c_max as u64 * cfg.frames);
            }
        }
    }

    #[test]
    fn single_run_aggregate_equals_run() {
        let cfg = ExperimentConfig { runs: 1, ..small(Default::default()) };
        let (agg, runs) = run_experiment_with_runs(&cfg).unwrap();
        assert_eq!(agg.fdr_mean, runs[0].fdr);
        assert_eq!(agg.tdr_mean, runs[0].tdr);
        assert!(agg.fdr_se.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn experiments_are_deterministic() {
        let cfg = small(ExperimentConfig { seed: 42, c_max: 2, ..Default::default() });
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
        assert_eq!(trace_replicate(&cfg, 3).unwrap(), trace_replicate(&cfg, 3).unwrap());
        let other = ExperimentConfig { seed: 43, ..cfg };
        assert_ne!(run_experiment(&other).unwrap(), run_experiment(&small(Default::default())).unwrap());
    }

    #[test]
    fn means_are_ratios() {
        let cfg = small(ExperimentConfig { pi1: 0.2, ..Default::default() });
        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.runs, 4);
        assert_eq!(agg.frames(), 200);
        for f in 0..agg.frames() {
            assert!((0.0..=1.0).contains(&agg.fdr_mean[f]));
            assert!((0.0..=1.0).contains(&agg.tdr_mean[f]));
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [SchedulerKind::TrackAndStop, SchedulerKind::Random] {
            assert_eq!(k.to_string().parse::<SchedulerKind>().unwrap(), k);
        }
        for k in [ThresholdKind::Dynamic, ThresholdKind::Fixed] {
            assert_eq!(k.to_string().parse::<ThresholdKind>().unwrap(), k);
        }
        assert!("greedy".parse::<SchedulerKind>().is_err());
    }
}
