//! Experiment runner: typed configuration, the five experiments and their
//! output files.
//!
//! Every artifact carries the resolved configuration and the code version.
//! Realizations run in parallel; files are written afterwards in realization
//! order, so output does not depend on the worker count.

pub mod config;
pub mod experiments;
pub mod output;
pub mod stats;

use std::path::PathBuf;

use serde_json::Value;

use crate::error::Result;

pub use config::{ExperimentConfig, ExperimentKind, SystemKind};
pub use experiments::{
    classical_strobe, oracle_lambda, run_isolated_decay, run_lyapunov_sweep, run_strobe_map, run_strong_qct,
    run_weak_qct, IsolatedDecaySummary, LyapunovPoint, LyapunovSweepSummary, OracleSummary, StrobePoint,
    StrobeSummary, StrongQctSummary, WeakQctPoint, WeakQctSummary,
};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    /// Overrides `numerics.base_seed`.
    pub seed: Option<u64>,
    /// Also write the noise increments of each realization.
    pub dump_noise: bool,
}

/// Run the configured experiment, write `summary.json` and return the
/// summary as JSON.
pub fn run_experiment(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<Value> {
    if let Some(seed) = opts.seed {
        cfg.numerics.base_seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    let out = cfg.output.dir.clone();
    std::fs::create_dir_all(&out)?;
    let summary = match cfg.experiment.name {
        ExperimentKind::StrongQct => serde_json::to_value(run_strong_qct(&cfg, &out)?)?,
        ExperimentKind::WeakQct => serde_json::to_value(run_weak_qct(&cfg, &out)?)?,
        ExperimentKind::LyapunovSweep => serde_json::to_value(run_lyapunov_sweep(&cfg, &out)?)?,
        ExperimentKind::StrobeMap => serde_json::to_value(run_strobe_map(&cfg, &out)?)?,
        ExperimentKind::IsolatedDecay => serde_json::to_value(run_isolated_decay(&cfg, &out)?)?,
    };
    output::write_summary(&out, &cfg, &summary)?;
    if opts.dump_noise && cfg.experiment.name != ExperimentKind::WeakQct {
        let model = cfg.model_spec()?;
        let spp = cfg.steps_per_period();
        let dt = model.period() / spp as f64;
        output::dump_noise(&out, &cfg, cfg.numerics.ensemble_n, dt, cfg.periods(cfg.numerics.t_total) * spp)?;
    }
    Ok(summary)
}
