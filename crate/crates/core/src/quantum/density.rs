//! Density matrices `ρ(x_i, x_j)` and the unconditioned master equation
//!
//! ```text
//! dρ/dt = −(i/ħ)[H, ρ] − (D/ħ²)[x, [x, ρ]]
//! ```
//!
//! with `D` the environmental diffusion plus the measurement backaction `ħ²k`.
//! In the position representation the double commutator is the local
//! multiplier `exp(−D (x_i − x_j)² dt/ħ²)`, applied exactly together with the
//! potential phase; kinetic half steps are spectral along both indices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, SpatialGrid};
use crate::quantum::state::{edge_cells, MomentSet, SpatialState, BOUNDARY_TOLERANCE};
use crate::spectral::{transpose_square, Fft, C64, ZERO};

/// Largest tolerated deviation of the trace from one.
pub const TRACE_TOLERANCE: f64 = 1e-6;

/// Row-major `n × n` density matrix on a position grid.
#[derive(Debug, Clone)]
pub struct DensityState {
    grid: SpatialGrid,
    rho: Vec<C64>,
    t: f64,
}

impl DensityState {
    pub fn zeros(grid: SpatialGrid) -> Self {
        let n = grid.len();
        Self { grid, rho: vec![ZERO; n * n], t: 0.0 }
    }

    pub fn from_pure(state: &SpatialState) -> Self {
        let mut d = Self::zeros(*state.grid());
        d.add_outer(state, 1.0);
        d.t = state.t();
        d
    }

    /// `ρ += w |ψ⟩⟨ψ|`.
    pub fn add_outer(&mut self, state: &SpatialState, w: f64) {
        let n = self.grid.len();
        let psi = state.amplitudes();
        self.rho.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let a = psi[i] * w;
            for (r, b) in row.iter_mut().zip(psi) {
                *r += a * b.conj();
            }
        });
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &[C64] {
        &self.rho
    }

    pub fn matrix_mut(&mut self) -> &mut [C64] {
        &mut self.rho
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.rho[i * self.grid.len() + j]
    }

    /// Position density `ρ(x_i, x_i)`.
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.grid.len();
        (0..n).map(|i| self.rho[i * n + i].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum::<f64>() * self.grid.dx()
    }

    /// `tr ρ²`, equal to one for pure states.
    pub fn purity(&self) -> f64 {
        let dx = self.grid.dx();
        self.rho.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx * dx
    }

    /// `max |ρ_ij − conj(ρ_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.rho[i * n + j] - self.rho[j * n + i].conj()).norm());
            }
        }
        worst
    }

    pub fn scale(&mut self, s: f64) {
        self.rho.par_iter_mut().for_each(|a| *a *= s);
    }

    pub fn boundary_mass(&self) -> f64 {
        let d = self.diagonal();
        let n = d.len();
        let e = edge_cells(n);
        (d[..e].iter().sum::<f64>() + d[n - e..].iter().sum::<f64>()) * self.grid.dx()
    }

    pub fn is_finite(&self) -> bool {
        self.rho.par_iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Trace, boundary and finiteness checks.
    pub fn check(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonfiniteState { t: self.t });
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::TraceDrift { t: self.t, trace: tr });
        }
        let mass = self.boundary_mass();
        if mass > BOUNDARY_TOLERANCE {
            return Err(Error::GridOverflow { t: self.t, mass });
        }
        Ok(())
    }

    pub fn moments(&self, hbar: f64) -> MomentSet {
        let n = self.grid.len();
        let g = self.grid;
        let diag = self.diagonal();
        let m0: f64 = diag.iter().sum();
        let x = diag.iter().enumerate().map(|(i, d)| d * g.x(i)).sum::<f64>() / m0;
        let vx = diag.iter().enumerate().map(|(i, d)| d * g.x(i).powi(2)).sum::<f64>() / m0 - x * x;

        let fft = Fft::new(n);
        let p = g.momenta(hbar);
        let inv_n = 1.0 / n as f64;

        // (Pρ)(x_i, x_i): P acts on the first index, i.e. along columns.
        let mut t = self.rho.clone();
        transpose_square(&mut t, n, false);
        let mult: Vec<C64> = p.iter().map(|p| C64::new(p * inv_n, 0.0)).collect();
        fft.convolve_rows(&mut t, &mult);
        let (mut p1, mut xp) = (0.0, 0.0);
        for i in 0..n {
            let d = t[i * n + i].re;
            p1 += d;
            xp += g.x(i) * d;
        }
        let pm = p1 / m0;
        let cxp = xp / m0 - x * pm;

        // momentum distribution ρ̃(p_a, p_a) = Σ_ij e^{−i p_a x_i/ħ} ρ_ij e^{i p_a x_j/ħ}
        let mut u = self.rho.clone();
        u.par_chunks_mut(n).for_each_init(
            || Fft::new(n),
            |f, row| f.inverse(row),
        );
        transpose_square(&mut u, n, false);
        u.par_chunks_mut(n).for_each_init(
            || Fft::new(n),
            |f, row| f.forward(row),
        );
        let (mut w0, mut w2) = (0.0, 0.0);
        for a in 0..n {
            let w = u[a * n + a].re;
            w0 += w;
            w2 += w * p[a] * p[a];
        }
        let vp = w2 / w0 - pm * pm;
        MomentSet { x, p: pm, vx, vp, cxp, t: self.t }
    }
}

/// Reusable master-equation propagator.
#[derive(Debug, Clone)]
pub struct LindbladStep {
    grid: SpatialGrid,
    model: ModelSpec,
    dt: f64,
    fft: Fft,
    /// conjugated kinetic multipliers including `1/n`
    kin_half: Vec<C64>,
    kin_full: Vec<C64>,
    /// `exp(−D_eff (m dx)² dt / ħ²)` for index separation `m`
    decay: Vec<f64>,
    local_force: bool,
}

impl LindbladStep {
    pub fn new(grid: SpatialGrid, model: &ModelSpec, dt: f64) -> Result<Self> {
        model.validate()?;
        if !(model.hbar > 0.0) {
            return Err(Error::InvalidModel("density-matrix propagation needs hbar > 0".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        let n = grid.len();
        let hbar = model.hbar;
        let inv_n = 1.0 / n as f64;
        let p = grid.momenta(hbar);
        let kin = |h: f64| -> Vec<C64> {
            p.iter().map(|p| C64::from_polar(inv_n, p * p * h / (2.0 * model.mass * hbar))).collect()
        };
        let d_eff = model.quantum_diffusion();
        let dx = grid.dx();
        let decay = (0..n).map(|m| (-d_eff * (m as f64 * dx).powi(2) * dt / (hbar * hbar)).exp()).collect();
        Ok(Self {
            grid,
            model: model.clone(),
            dt,
            fft: Fft::new(n),
            kin_half: kin(0.5 * dt),
            kin_full: kin(dt),
            decay,
            local_force: false,
        })
    }

    /// Replace `V(x_i) − V(x_j)` by its leading term `V'(x̄)(x_i − x_j)`,
    /// dropping every higher-order (quantum-correction) part of the potential
    /// term. The resulting evolution is the classical Fokker–Planck flow of the
    /// Wigner function.
    pub fn without_quantum_corrections(mut self) -> Self {
        self.local_force = true;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&mut self, rho: &mut DensityState) -> Result<()> {
        self.evolve(rho, 1)
    }

    /// `steps` Strang steps with fused kinetic halves. Trace and boundary are
    /// checked after every step.
    pub fn evolve(&mut self, rho: &mut DensityState, steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        if rho.grid() != &self.grid {
            return Err(Error::InvalidGrid("state and propagator grids differ".into()));
        }
        let t0 = rho.t();
        self.kinetic(rho.matrix_mut(), true);
        for s in 0..steps {
            let t_mid = t0 + (s as f64 + 0.5) * self.dt;
            self.position_stage(rho.matrix_mut(), t_mid);
            self.kinetic(rho.matrix_mut(), s + 1 == steps);
            rho.set_t(t0 + (s + 1) as f64 * self.dt);
            let tr = rho.trace();
            if !tr.is_finite() {
                return Err(Error::NonfiniteState { t: rho.t() });
            }
            if (tr - 1.0).abs() > TRACE_TOLERANCE {
                return Err(Error::TraceDrift { t: rho.t(), trace: tr });
            }
            let mass = rho.boundary_mass();
            if mass > BOUNDARY_TOLERANCE {
                return Err(Error::GridOverflow { t: rho.t(), mass });
            }
        }
        Ok(())
    }

    /// `ρ → K ρ K†` using hermiticity: `(ρK†)† = Kρ`.
    fn kinetic(&mut self, rho: &mut [C64], half: bool) {
        let n = self.grid.len();
        let mult = if half { &self.kin_half } else { &self.kin_full };
        self.fft.convolve_rows(rho, mult);
        transpose_square(rho, n, true);
        self.fft.convolve_rows(rho, mult);
    }

    fn position_stage(&self, rho: &mut [C64], t_mid: f64) {
        let n = self.grid.len();
        let g = self.grid;
        let hbar = self.model.hbar;
        let dt = self.dt;
        let v = &self.model.potential;
        let decay = &self.decay;
        if self.local_force {
            rho.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let xi = g.x(i);
                for (j, r) in row.iter_mut().enumerate() {
                    let xj = g.x(j);
                    let f = v.force(0.5 * (xi + xj), t_mid);
                    *r *= C64::from_polar(decay[i.abs_diff(j)], f * (xi - xj) * dt / hbar);
                }
            });
        } else {
            let e: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, -v.value(g.x(i), t_mid) * dt / hbar)).collect();
            rho.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let ei = e[i];
                for (j, (r, ej)) in row.iter_mut().zip(&e).enumerate() {
                    *r *= ei * ej.conj() * decay[i.abs_diff(j)];
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{duffing_spec, PotentialSpec};
    use crate::quantum::sse::SplitStep;

    #[test]
    fn pure_state_invariants() {
        let hbar = 0.3;
        let g = SpatialGrid::new(-6.0, 6.0, 64).unwrap();
        let s = SpatialState::coherent(g, hbar, 0.5, 0.4, 0.5);
        let rho = DensityState::from_pure(&s);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert!(rho.hermiticity_error() < 1e-15);
        let (a, b) = (rho.moments(hbar), s.moments(hbar));
        for (u, v) in [(a.x, b.x), (a.p, b.p), (a.vx, b.vx), (a.vp, b.vp), (a.cxp, b.cxp)] {
            assert!((u - v).abs() < 1e-10, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn unitary_limit_matches_wavefunction() {
        let hbar = 0.2;
        let model = duffing_spec().with_hbar(hbar);
        let g = SpatialGrid::new(-7.0, 7.0, 128).unwrap();
        let mut psi = SpatialState::coherent(g, hbar, 2.0, 0.0, (hbar / 2.0).sqrt());
        let mut rho = DensityState::from_pure(&psi);
        let dt = model.period() / 400.0;
        let mut lind = LindbladStep::new(g, &model, dt).unwrap();
        let mut split = SplitStep::new(g, &model, dt).unwrap();
        for _ in 0..20 {
            lind.evolve(&mut rho, 10).unwrap();
            split.isolated_evolve(&mut psi, 10).unwrap();
            assert!((rho.purity() - 1.0).abs() < 1e-8);
        }
        let reference = DensityState::from_pure(&psi);
        let err = rho.matrix().iter().zip(reference.matrix()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "err {err}");
        assert!(rho.hermiticity_error() < 1e-10);
    }

    #[test]
    fn free_momentum_diffusion() {
        let (hbar, d) = (0.5, 0.05);
        let model = ModelSpec::new(PotentialSpec::free(), 1.0, hbar, 0.0, d).unwrap();
        let g = SpatialGrid::new(-16.0, 16.0, 256).unwrap();
        let s = SpatialState::coherent(g, hbar, 0.0, 0.0, 1.0);
        let mut rho = DensityState::from_pure(&s);
        let vp0 = rho.moments(hbar).vp;
        let mut lind = LindbladStep::new(g, &model, 0.01).unwrap();
        lind.evolve(&mut rho, 200).unwrap();
        let rate = (rho.moments(hbar).vp - vp0) / 2.0;
        assert!((rate / (2.0 * d) - 1.0).abs() < 0.02, "rate {rate}");
        rho.check().unwrap();
    }

    #[test]
    fn trace_drift_is_reported() {
        let hbar = 0.5;
        let model = ModelSpec::new(PotentialSpec::harmonic(), 1.0, hbar, 0.0, 0.0).unwrap();
        let g = SpatialGrid::new(-8.0, 8.0, 64).unwrap();
        let mut rho = DensityState::from_pure(&SpatialState::coherent(g, hbar, 0.0, 0.0, 0.5));
        rho.scale(1.01);
        let mut lind = LindbladStep::new(g, &model, 0.01).unwrap();
        assert!(matches!(lind.step(&mut rho), Err(Error::TraceDrift { .. })));
    }
}
