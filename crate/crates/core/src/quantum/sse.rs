//! Split-step propagation of pure states: isolated Schrödinger evolution and
//! the normalized position-measurement stochastic Schrödinger equation
//!
//! ```text
//! dψ = [−iH/ħ − k(x−⟨x⟩)²] ψ dt + √(2k)(x−⟨x⟩) ψ dW,   dy = ⟨x⟩dt + dW/√(8k)
//! ```
//!
//! Each step is Strang split: half kinetic, position stage at the midpoint,
//! half kinetic. The position stage applies the potential phase and the
//! Gaussian measurement operator `exp(−2k dt (x − ȳ)²)` with
//! `ȳ = ⟨x⟩ + dW/(√(8k) dt)`, followed by renormalization; to first order in
//! `dt` this is the Itô increment above, but it stays positive and
//! norm-bounded for any `dt`. Adjacent half kinetic steps are fused, so a run of
//! `n` steps costs `n + 1` transform pairs.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, SpatialGrid};
use crate::noise::NoisePath;
use crate::quantum::state::{edge_cells, SpatialState, BOUNDARY_TOLERANCE};
use crate::spectral::{Fft, C64, ZERO};

/// Distance (in grid points) between exact re-evaluations of the
/// geometric phase recurrence.
const REANCHOR: usize = 64;

/// What the position stage of one step saw.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// Midpoint time at which the position stage was applied.
    pub t_mid: f64,
    /// `⟨x⟩` at the midpoint.
    pub x_mean: f64,
    pub dw: f64,
    /// Record increment `⟨x⟩dt + dW/√(8k)`; zero without measurement.
    pub dy: f64,
}

/// Reusable propagator for one grid, model and step size.
#[derive(Debug, Clone)]
pub struct SplitStep {
    grid: SpatialGrid,
    model: ModelSpec,
    dt: f64,
    fft: Fft,
    kin_half: Vec<C64>,
    kin_full: Vec<C64>,
    /// `exp(−i V₀(x) dt/ħ)`
    phase: Vec<C64>,
    /// `exp(−i V₀(x) dt/ħ − 2k dt x²)`
    phase_meas: Vec<C64>,
    edge: usize,
    warned: bool,
}

impl SplitStep {
    pub fn new(grid: SpatialGrid, model: &ModelSpec, dt: f64) -> Result<Self> {
        model.validate()?;
        if !(model.hbar > 0.0) {
            return Err(Error::InvalidModel("wavefunction propagation needs hbar > 0".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        let n = grid.len();
        let hbar = model.hbar;
        let inv_n = 1.0 / n as f64;
        let p = grid.momenta(hbar);
        let kin = |h: f64| -> Vec<C64> {
            p.iter().map(|p| C64::from_polar(inv_n, -p * p * h / (2.0 * model.mass * hbar))).collect()
        };
        let phase: Vec<C64> =
            (0..n).map(|i| C64::from_polar(1.0, -model.potential.static_value(grid.x(i)) * dt / hbar)).collect();
        let phase_meas = phase
            .iter()
            .enumerate()
            .map(|(i, e)| e * (-2.0 * model.k * dt * grid.x(i).powi(2)).exp())
            .collect();
        Ok(Self {
            grid,
            model: model.clone(),
            dt,
            fft: Fft::new(n),
            kin_half: kin(0.5 * dt),
            kin_full: kin(dt),
            phase,
            phase_meas,
            edge: edge_cells(n),
            warned: false,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// One unitary step (measurement switched off regardless of `k`).
    pub fn isolated_step(&mut self, state: &mut SpatialState) -> Result<()> {
        self.isolated_evolve(state, 1)
    }

    pub fn isolated_evolve(&mut self, state: &mut SpatialState, steps: usize) -> Result<()> {
        self.run(state, steps, |_| None, |_| {})
    }

    /// One conditioned step consuming the next increment of `noise`; returns
    /// the record increment `dy`.
    pub fn sse_step(&mut self, state: &mut SpatialState, noise: &mut NoisePath) -> Result<f64> {
        self.require_measurement()?;
        let mut dy = 0.0;
        self.run(state, 1, |_| Some(noise.next_dw()), |info| dy = info.dy)?;
        Ok(dy)
    }

    /// Conditioned evolution driven by the given increments, one step per
    /// entry. `on_step` sees every position stage.
    pub fn sse_evolve(
        &mut self,
        state: &mut SpatialState,
        dws: &[f64],
        on_step: impl FnMut(&StepInfo),
    ) -> Result<()> {
        self.require_measurement()?;
        self.run(state, dws.len(), |s| Some(dws[s]), on_step)
    }

    /// Conditioned evolution drawing `steps` increments from `noise`.
    pub fn sse_evolve_noise(
        &mut self,
        state: &mut SpatialState,
        noise: &mut NoisePath,
        steps: usize,
        on_step: impl FnMut(&StepInfo),
    ) -> Result<()> {
        self.require_measurement()?;
        self.run(state, steps, |_| Some(noise.next_dw()), on_step)
    }

    fn require_measurement(&self) -> Result<()> {
        if !(self.model.k > 0.0) {
            return Err(Error::InvalidParameter("conditioned evolution needs k > 0".into()));
        }
        if self.model.diffusion > 0.0 {
            return Err(Error::InvalidParameter(
                "a pure-state unraveling cannot carry environmental diffusion; use the density-matrix propagator".into(),
            ));
        }
        Ok(())
    }

    fn kinetic(&mut self, psi: &mut [C64], half: bool, scale: f64) {
        self.fft.forward(psi);
        let k = if half { &self.kin_half } else { &self.kin_full };
        for (a, m) in psi.iter_mut().zip(k) {
            *a *= m * scale;
        }
        self.fft.inverse(psi);
    }

    fn run(
        &mut self,
        state: &mut SpatialState,
        steps: usize,
        mut next_dw: impl FnMut(usize) -> Option<f64>,
        mut on_step: impl FnMut(&StepInfo),
    ) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        if state.grid() != &self.grid {
            return Err(Error::InvalidGrid("state and propagator grids differ".into()));
        }
        let t0 = state.t();
        let dt = self.dt;
        let dx = self.grid.dx();
        // work on a copy so the caller's state is untouched if we bail out
        let mut psi = state.amplitudes().to_vec();
        let mut scale = 1.0 / (psi.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx).sqrt();
        self.kinetic(&mut psi, true, scale);
        for s in 0..steps {
            let t_mid = t0 + (s as f64 + 0.5) * dt;
            let dw = next_dw(s);
            let info = self.position_stage(&mut psi, t_mid, dw)?;
            let norm = info.1;
            if !norm.is_finite() || norm <= 0.0 {
                return Err(Error::NonfiniteState { t: t_mid });
            }
            scale = 1.0 / (norm * dx).sqrt();
            self.kinetic(&mut psi, s + 1 == steps, scale);
            on_step(&info.0);
        }
        state.amplitudes_mut().copy_from_slice(&psi);
        state.set_t(t0 + steps as f64 * dt);
        if !state.is_finite() {
            return Err(Error::NonfiniteState { t: state.t() });
        }
        Ok(())
    }

    /// Potential phase plus (optionally) the measurement operator. Returns the
    /// step info and the post-stage sum of `|ψ|²`.
    fn position_stage(&mut self, psi: &mut [C64], t_mid: f64, dw: Option<f64>) -> Result<(StepInfo, f64)> {
        let n = psi.len();
        let g = self.grid;
        let (mut m0, mut m1, mut m2, mut edge) = (0.0, 0.0, 0.0, 0.0);
        for (i, a) in psi.iter().enumerate() {
            let w = a.norm_sqr();
            let x = g.x(i);
            m0 += w;
            m1 += w * x;
            m2 += w * x * x;
            if i < self.edge || i >= n - self.edge {
                edge += w;
            }
        }
        if !m0.is_finite() {
            return Err(Error::NonfiniteState { t: t_mid });
        }
        let mass = edge / m0;
        if mass > BOUNDARY_TOLERANCE {
            return Err(Error::GridOverflow { t: t_mid, mass });
        }
        let x_mean = m1 / m0;
        let k = self.model.k;
        let hbar = self.model.hbar;
        let (a, dy, dw_val, stat) = match dw {
            Some(dw) => {
                let vx = m2 / m0 - x_mean * x_mean;
                if !self.warned && k * vx * self.dt >= 0.1 {
                    log::warn!("k Vx dt = {:.3} at t = {t_mid}: step too coarse for the measurement rate", k * vx * self.dt);
                    self.warned = true;
                }
                let a = 4.0 * k * self.dt * x_mean + (2.0 * k).sqrt() * dw;
                let dy = x_mean * self.dt + dw / (8.0 * k).sqrt();
                (a, dy, dw, &self.phase_meas)
            }
            None => (0.0, 0.0, 0.0, &self.phase),
        };
        // exp((a + i b) x) with b from the drive, by geometric recurrence
        let c = C64::new(a, -self.model.potential.drive(t_mid) * self.dt / hbar);
        let ratio = (c * g.dx()).exp();
        let mut z = ZERO;
        let mut norm = 0.0;
        for (i, (v, s)) in psi.iter_mut().zip(stat).enumerate() {
            if i % REANCHOR == 0 {
                z = (c * g.x(i)).exp();
            } else {
                z *= ratio;
            }
            *v *= s * z;
            norm += v.norm_sqr();
        }
        Ok((StepInfo { t_mid, x_mean, dw: dw_val, dy }, norm))
    }
}

/// Record increments and their window averages.
#[derive(Debug, Clone, Default)]
pub struct MeasurementRecord {
    dt: f64,
    samples: Vec<f64>,
}

impl MeasurementRecord {
    pub fn new(dt: f64) -> Self {
        Self { dt, samples: Vec::new() }
    }

    pub fn push(&mut self, dy: f64) {
        self.samples.push(dy);
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `ȳ = Σ dy / Δt` over consecutive windows of `window` samples; the
    /// trailing partial window is dropped.
    pub fn averaged(&self, window: usize) -> Vec<f64> {
        let span = window as f64 * self.dt;
        self.samples.chunks_exact(window.max(1)).map(|c| c.iter().sum::<f64>() / span).collect()
    }
}
