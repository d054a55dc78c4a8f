//! Experiment configuration: TOML with fixed sections and typed keys.
//! Unknown sections or keys are rejected.
//!
//! Times in `[numerics]` are in drive periods; `dt` is rounded so an
//! integer number of steps spans one period exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::Renormalization;
use crate::model::{ModelSpec, PhaseSpaceGrid, PotentialSpec, SpatialGrid};
use crate::qct::{ActionConvention, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    StrongQct,
    WeakQct,
    LyapunovSweep,
    StrobeMap,
    IsolatedDecay,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::StrongQct => "strong-qct",
            ExperimentKind::WeakQct => "weak-qct",
            ExperimentKind::LyapunovSweep => "lyapunov-sweep",
            ExperimentKind::StrobeMap => "strobe-map",
            ExperimentKind::IsolatedDecay => "isolated-decay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: ExperimentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "one")]
    pub mass: f64,
    pub hbar: f64,
    #[serde(default)]
    pub k: f64,
    #[serde(rename = "D", default)]
    pub diffusion: f64,
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub drive_amp: f64,
    #[serde(default)]
    pub drive_omega: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
    pub n_p: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    /// Step in drive periods.
    pub dt: f64,
    /// Run length in drive periods.
    pub t_total: f64,
    #[serde(default = "one_usize")]
    pub ensemble_n: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Renormalization interval in drive periods.
    #[serde(default = "one")]
    pub tau_r: f64,
    /// Initial offset; defaults to `1e-6 · (x_max − x_min)`.
    pub delta0: Option<f64>,
    /// Output cadence in drive periods.
    #[serde(default = "one")]
    pub sample_every: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: f64,
    pub p0: f64,
    /// Position width of the coherent state; defaults to `√(ħ/2)`.
    pub width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k: Option<Vec<f64>>,
    #[serde(rename = "D")]
    pub diffusion: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QctSection {
    /// Physical action `S`; computed from the noiseless orbit when absent.
    pub action: Option<f64>,
    pub action_convention: ActionConvention,
    /// Record averaging window `Δt` in drive periods.
    pub window: f64,
    /// Position tolerance `Δx`.
    pub tolerance: f64,
    pub much_greater: f64,
    pub at_least: f64,
    pub singular_force: f64,
    pub strong_violation: f64,
    /// Abort with an invariant violation if `max √Vx` exceeds this.
    pub sigma_x_bound: Option<f64>,
    /// Average the force-dependent criteria over the trajectory instead of
    /// evaluating them at the initial point.
    pub average: bool,
    /// Periods of noiseless orbit used for the bounding area and action.
    pub orbit_periods: usize,
    /// Starting points and length (periods) of the tangent-space oracle.
    pub oracle_points: usize,
    pub oracle_periods: usize,
    pub oracle_dt: f64,
    /// Spread of the oracle starting points around `(x0, p0)`.
    pub oracle_spread: f64,
}

impl Default for QctSection {
    fn default() -> Self {
        let th = Thresholds::default();
        Self {
            action: None,
            action_convention: ActionConvention::default(),
            window: 0.01,
            tolerance: 0.01,
            much_greater: th.much_greater,
            at_least: th.at_least,
            singular_force: th.singular_force,
            strong_violation: th.strong_violation,
            sigma_x_bound: None,
            average: false,
            orbit_periods: 200,
            oracle_points: 32,
            oracle_periods: 2000,
            oracle_dt: 1e-3,
            oracle_spread: 0.2236,
        }
    }
}

impl QctSection {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            much_greater: self.much_greater,
            at_least: self.at_least,
            singular_force: self.singular_force,
            strong_violation: self.strong_violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    #[default]
    Quantum,
    Cumulant,
    Langevin,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSection {
    pub system: SystemKind,
    pub renormalization: Renormalization,
    /// Direction of the initial offset in the (x, p) plane.
    pub angle: f64,
    pub scales: [f64; 2],
    /// Fit window `[from, to]` in periods for the isolated-decay slope.
    pub fit_window: [f64; 2],
}

impl Default for LyapunovSection {
    fn default() -> Self {
        Self {
            system: SystemKind::Quantum,
            renormalization: Renormalization::default(),
            angle: 0.7,
            scales: [1.0, 1.0],
            fit_window: [10.0, 500.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrobeSection {
    pub system: SystemKind,
    /// Kernel bandwidths `(hx, hp)`; Scott's rule when absent.
    pub bandwidth: Option<[f64; 2]>,
    pub levels: Vec<f64>,
    pub density_n: usize,
    /// Periods of the noiseless classical reference map.
    pub reference_periods: usize,
}

impl Default for StrobeSection {
    fn default() -> Self {
        Self {
            system: SystemKind::Quantum,
            bandwidth: None,
            levels: vec![0.05, 0.15, 0.25, 0.35, 0.45, 0.55],
            density_n: 128,
            reference_periods: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write field snapshots every this many periods (final only if absent).
    pub snapshot_every: Option<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_every: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub numerics: NumericsSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub qct: QctSection,
    #[serde(default)]
    pub lyapunov: LyapunovSection,
    #[serde(default)]
    pub strobe: StrobeSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        let bad = |m: String| Err(Error::Config(m));
        if !(n.dt > 0.0 && n.dt <= 1.0) {
            return bad(format!("numerics.dt must be in (0, 1] periods, got {}", n.dt));
        }
        if !(n.t_total > 0.0) {
            return bad(format!("numerics.t_total must be > 0, got {}", n.t_total));
        }
        if n.ensemble_n == 0 {
            return bad("numerics.ensemble_n must be >= 1".into());
        }
        if !(n.tau_r > 0.0 && n.sample_every > 0.0) {
            return bad("numerics.tau_r and numerics.sample_every must be > 0".into());
        }
        if self.model.drive_omega < 0.0 {
            return bad("model.drive_omega must be >= 0".into());
        }
        self.model_spec()?;
        self.spatial_grid()?;
        if let (Some(_), None) | (None, Some(_)) = (self.model.p_min, self.model.p_max) {
            return bad("model.p_min and model.p_max go together".into());
        }
        if self.experiment.name == ExperimentKind::IsolatedDecay && self.model.k != 0.0 {
            return bad("isolated-decay needs model.k = 0".into());
        }
        if let Some(w) = self.initial.width {
            if !(w > 0.0) {
                return bad(format!("initial.width must be > 0, got {w}"));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let pot = PotentialSpec::new(m.coeffs.clone(), m.drive_amp, m.drive_omega)
            .map_err(|e| Error::Config(e.to_string()))?;
        ModelSpec::new(pot, m.mass, m.hbar, m.k, m.diffusion).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.model.x_min, self.model.x_max, self.model.n).map_err(|e| Error::Config(e.to_string()))
    }

    /// Classical phase-space grid; needs `p_min`, `p_max`, `n_p`.
    pub fn phase_space_grid(&self) -> Result<PhaseSpaceGrid> {
        let m = &self.model;
        match (m.p_min, m.p_max, m.n_p) {
            (Some(lo), Some(hi), Some(np)) => {
                PhaseSpaceGrid::new(self.spatial_grid()?, lo, hi, np).map_err(|e| Error::Config(e.to_string()))
            }
            _ => Err(Error::Config(format!("{} needs model.p_min, model.p_max and model.n_p", self.experiment.name.name()))),
        }
    }

    pub fn steps_per_period(&self) -> usize {
        (1.0 / self.numerics.dt).round().max(1.0) as usize
    }

    /// Whole periods, rounded.
    pub fn periods(&self, t: f64) -> usize {
        t.round().max(1.0) as usize
    }

    pub fn width(&self) -> f64 {
        self.initial.width.unwrap_or_else(|| (self.model.hbar / 2.0).sqrt())
    }

    pub fn delta0(&self) -> f64 {
        self.numerics.delta0.unwrap_or(1e-6 * (self.model.x_max - self.model.x_min))
    }

    /// Values of `k` to run: the sweep list or the single model value.
    pub fn k_values(&self) -> Vec<f64> {
        self.sweep.k.clone().unwrap_or_else(|| vec![self.model.k])
    }

    pub fn d_values(&self) -> Vec<f64> {
        self.sweep.diffusion.clone().unwrap_or_else(|| vec![self.model.diffusion])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[experiment]
name = "lyapunov-sweep"

[model]
hbar = 16.0
k = 0.02
coeffs = [0.0, 0.0, -10.0, 0.0, 0.5]
drive_amp = 10.0
drive_omega = 6.07
x_min = -20.0
x_max = 20.0
n = 256

[numerics]
dt = 0.0025
t_total = 500
ensemble_n = 16

[initial]
x0 = 2.0
p0 = 0.0
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.experiment.name, ExperimentKind::LyapunovSweep);
        assert_eq!(c.steps_per_period(), 400);
        assert_eq!(c.numerics.tau_r, 1.0);
        assert!((c.width() - 8f64.sqrt()).abs() < 1e-12);
        assert!((c.delta0() - 4e-5).abs() < 1e-18);
        assert_eq!(c.k_values(), vec![0.02]);
        let round = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("ensemble_n = 16", "ensemble_n = 16\nensembel = 3");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
        let text = format!("{SAMPLE}\n[extra]\na = 1\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn missing_section_is_rejected() {
        let text = SAMPLE.replace("[initial]\nx0 = 2.0\np0 = 0.0\n", "");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let text = SAMPLE.replace("n = 256", "n = 1");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let text = SAMPLE.replace("name = \"lyapunov-sweep\"", "name = \"isolated-decay\"");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
