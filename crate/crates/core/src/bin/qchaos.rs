use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use qchaos::expcli::{run_experiment, ExperimentConfig, ExperimentKind, RunOptions};
use qchaos::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    StrongQct,
    WeakQct,
    LyapunovSweep,
    StrobeMap,
    IsolatedDecay,
}

impl From<Experiment> for ExperimentKind {
    fn from(e: Experiment) -> Self {
        match e {
            Experiment::StrongQct => ExperimentKind::StrongQct,
            Experiment::WeakQct => ExperimentKind::WeakQct,
            Experiment::LyapunovSweep => ExperimentKind::LyapunovSweep,
            Experiment::StrobeMap => ExperimentKind::StrobeMap,
            Experiment::IsolatedDecay => ExperimentKind::IsolatedDecay,
        }
    }
}

/// Continuously measured quantum and classical oscillators.
#[derive(Debug, Parser)]
#[command(name = "qchaos", version)]
struct Cli {
    experiment: Experiment,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `numerics.base_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the noise increments of every realization as NDJSON.
    #[arg(long)]
    dump_noise: bool,
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = ExperimentConfig::load(&cli.config)?;
    let wanted = ExperimentKind::from(cli.experiment);
    if cfg.experiment.name != wanted {
        return Err(Error::Config(format!(
            "config is for experiment '{}', not '{}'",
            cfg.experiment.name.name(),
            wanted.name()
        )));
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let opts = RunOptions { out: cli.out, seed: cli.seed, dump_noise: cli.dump_noise };
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let summary = run_experiment(cfg, &opts)?;
    if let Some(report) = summary.get("report") {
        print_report(report);
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("outputs written to {}", out_dir.display());
    Ok(())
}

/// Aligned table of a serialized QCT report.
fn print_report(r: &serde_json::Value) {
    let Some(entries) = r.get("entries").and_then(|e| e.as_array()) else {
        return;
    };
    println!("{:<28} {:>12} {:>12} {:>12}  {}", "criterion", "lhs", "rhs", "margin", "verdict");
    for e in entries {
        let f = |k: &str| e.get(k).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        let ok = e.get("satisfied").and_then(|v| v.as_bool()).unwrap_or(false);
        println!(
            "{:<28} {:>12.4e} {:>12.4e} {:>12.4e}  {}",
            e.get("name").and_then(|v| v.as_str()).unwrap_or("?"),
            f("lhs"),
            f("rhs"),
            f("margin"),
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
