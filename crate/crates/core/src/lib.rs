//! Online anomaly detection over a pull-based neuromorphic sensor network.
//!
//! A reader queries a subset of `K` spiking sensor nodes every frame. Each
//! queried node senses for `L` slots, emitting Bernoulli spikes whose rate
//! rises when the monitored environment is anomalous, and ships them over a
//! binary asymmetric channel. The reader turns the received spikes into
//! plug-in e-values, merges them, and rejects the "normal" hypothesis against
//! a γ-investing threshold that keeps the decaying-memory false discovery
//! rate below a target level. Which nodes to query is learned online with a
//! track-and-stop best-arm identification rule.
//!
//! Module map:
//!
//! - [`env`]: state process, spike sources, channel, seeded random streams.
//! - [`evalue`]: per-node plug-in e-values and their merge.
//! - [`fdr`]: γ sequence, rejection-threshold control, decayed FDR/TDR.
//! - [`allocation`]: Bernoulli KL optimal allocation solver.
//! - [`scheduler`]: track-and-stop, its multi-slot extension, random baseline.
//! - [`sim`]: frame loop, Monte-Carlo replication and aggregation.

pub mod allocation;
pub mod env;
pub mod error;
pub mod evalue;
pub mod fdr;
pub mod scheduler;
pub mod sim;

pub use allocation::{bernoulli_kl, optimal_weights, WeightVector};
pub use env::{ChannelModel, Purpose, RandomSource, SensorProfile, SpikeSequence, StateProcess};
pub use error::{Error, Result};
pub use evalue::{
    estimate_spike_rate, merge_evalues, ml_anomalous_rate, null_receive_prob, plugin_evalue, EValue, NullReceiveModel,
};
pub use fdr::{decide, DecayedMetrics, FrameRatios, GammaSequence, ThresholdController, ThresholdRule};
pub use scheduler::{select_random, SchedulerState};
pub use sim::{
    draw_profiles, run_experiment, run_experiment_with_runs, run_replicate, trace_replicate, AggregateSeries,
    ExperimentConfig, FrameTrace, Replicate, RunSeries, SchedulerKind, ThresholdKind,
};
