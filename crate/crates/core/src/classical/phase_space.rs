//! Grid evolution of classical phase-space densities.
//!
//! Liouville flow is split into two exact shears, each a phase multiplier
//! in the conjugate variable: the drift `f(x − p dt/m, p)` along `x` and the
//! kick `f(x, p − F dt)` along `p`, in Strang order drift/2 · kick · drift/2.
//! Momentum diffusion `D ∂²_p f` is the Gaussian multiplier `exp(−D θ² dt)` on
//! the kick's transform. Spectral ringing of under-resolved structure produces
//! small negative values; they are clipped at block ends and the clipped mass
//! is accumulated so runs can report it.

use crate::error::{Error, Result};
use crate::field::PhaseSpaceField;
use crate::model::{fft_frequencies, ModelSpec, PhaseSpaceGrid};
use crate::noise::NoisePath;
use crate::spectral::{transpose_into, Fft, C64, ZERO};

/// Reusable Liouville / Fokker–Planck / Kushner propagator.
#[derive(Debug, Clone)]
pub struct PhaseSpaceStep {
    grid: PhaseSpaceGrid,
    model: ModelSpec,
    dt: f64,
    diffusion: f64,
    fft_x: Fft,
    fft_p: Fft,
    kappa: Vec<f64>,
    theta: Vec<f64>,
    /// x-major working copy
    xm: Vec<C64>,
    /// p-major working copy
    pm: Vec<C64>,
    clipped: f64,
}

impl PhaseSpaceStep {
    /// Fokker–Planck propagator with the model's diffusion `D`.
    pub fn new(grid: PhaseSpaceGrid, model: &ModelSpec, dt: f64) -> Result<Self> {
        Self::build(grid, model, dt, model.diffusion)
    }

    /// Pure Liouville propagator; the model's `D` is ignored.
    pub fn liouville(grid: PhaseSpaceGrid, model: &ModelSpec, dt: f64) -> Result<Self> {
        Self::build(grid, model, dt, 0.0)
    }

    fn build(grid: PhaseSpaceGrid, model: &ModelSpec, dt: f64, diffusion: f64) -> Result<Self> {
        model.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        let (nx, np) = (grid.nx(), grid.np());
        let kappa = fft_frequencies(nx, 2.0 * std::f64::consts::PI / (nx as f64 * grid.dx()));
        let theta = fft_frequencies(np, 2.0 * std::f64::consts::PI / (np as f64 * grid.dp()));
        Ok(Self {
            grid,
            model: model.clone(),
            dt,
            diffusion,
            fft_x: Fft::new(nx),
            fft_p: Fft::new(np),
            kappa,
            theta,
            xm: vec![ZERO; nx * np],
            pm: vec![ZERO; nx * np],
            clipped: 0.0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    /// Total mass removed by clipping negative values so far.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped
    }

    pub fn step(&mut self, f: &mut PhaseSpaceField) -> Result<()> {
        self.evolve(f, 1)
    }

    /// `steps` Strang steps with fused drift halves.
    pub fn evolve(&mut self, f: &mut PhaseSpaceField, steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        self.load(f)?;
        let t0 = f.t();
        self.drift(0.5 * self.dt);
        for s in 0..steps {
            self.kick(t0 + (s as f64 + 0.5) * self.dt);
            let h = if s + 1 == steps { 0.5 } else { 1.0 };
            self.drift(h * self.dt);
        }
        f.set_t(t0 + steps as f64 * self.dt);
        self.store(f)
    }

    /// One conditioned step: advection, then the Bayesian reweighting by
    /// the record likelihood `f ← f exp(8k x dy − 4k x² dt)`, normalized.
    /// To first order this is `f [1 + √(8k)(x − ⟨x⟩) dW]` and it keeps `f`
    /// non-negative for any increment. Returns `(⟨x⟩, dy)` with
    /// `dy = ⟨x⟩dt + dW/√(8k)`.
    pub fn kushner_step(&mut self, f: &mut PhaseSpaceField, dw: f64) -> Result<(f64, f64)> {
        let k = self.model.k;
        if !(k > 0.0) {
            return Err(Error::InvalidParameter("conditioned evolution needs k > 0".into()));
        }
        self.evolve(f, 1)?;
        let x_mean = x_mean(f);
        let dy = x_mean * self.dt + dw / (8.0 * k).sqrt();
        let g = *f.grid();
        let np = g.np();
        let exponent = |x: f64| 8.0 * k * x * dy - 4.0 * k * x * x * self.dt;
        // the exponent is a downward parabola in x; shift by its peak on the grid
        let peak = (0..g.nx()).map(|i| exponent(g.x_grid().x(i))).fold(f64::NEG_INFINITY, f64::max);
        for (i, row) in f.values_mut().chunks_mut(np).enumerate() {
            let w = (exponent(g.x_grid().x(i)) - peak).exp();
            row.iter_mut().for_each(|v| *v *= w);
        }
        if !f.is_finite() || f.integral() <= 0.0 {
            return Err(Error::NonfiniteState { t: f.t() });
        }
        f.normalize();
        Ok((x_mean, dy))
    }

    /// `steps` conditioned steps drawing increments from `noise`; `on_step`
    /// receives `(⟨x⟩, dW, dy)`.
    pub fn kushner_evolve(
        &mut self,
        f: &mut PhaseSpaceField,
        noise: &mut NoisePath,
        steps: usize,
        mut on_step: impl FnMut(f64, f64, f64),
    ) -> Result<()> {
        for _ in 0..steps {
            let dw = noise.next_dw();
            let (x, dy) = self.kushner_step(f, dw)?;
            on_step(x, dw, dy);
        }
        Ok(())
    }

    fn load(&mut self, f: &PhaseSpaceField) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::InvalidGrid("field and propagator grids differ".into()));
        }
        for (c, v) in self.xm.iter_mut().zip(f.values()) {
            *c = C64::new(*v, 0.0);
        }
        transpose_into(&self.xm, self.grid.nx(), self.grid.np(), &mut self.pm);
        Ok(())
    }

    fn store(&mut self, f: &mut PhaseSpaceField) -> Result<()> {
        transpose_into(&self.pm, self.grid.np(), self.grid.nx(), &mut self.xm);
        let mut clipped = 0.0;
        let mut total = 0.0;
        for (v, c) in f.values_mut().iter_mut().zip(&self.xm) {
            let r = c.re;
            if !r.is_finite() {
                return Err(Error::NonfiniteField { t: f.t() });
            }
            if r < 0.0 {
                clipped -= r;
                *v = 0.0;
            } else {
                *v = r;
                total += r;
            }
        }
        let area = self.grid.cell_area();
        self.clipped += clipped * area;
        if clipped > 0.0 && total > 0.0 {
            let s = (total - clipped) / total;
            f.values_mut().iter_mut().for_each(|v| *v *= s);
        }
        Ok(())
    }

    /// Shear along `x` by `p h/m`, on the p-major copy.
    fn drift(&mut self, h: f64) {
        let nx = self.grid.nx();
        let inv = 1.0 / nx as f64;
        let m = self.model.mass;
        let grid = self.grid;
        let kappa = &self.kappa;
        self.fft_x.convolve_rows_with(&mut self.pm, |j, row| {
            let a = grid.p(j) * h / m;
            for (l, (v, k)) in row.iter_mut().zip(kappa).enumerate() {
                *v *= if l == nx / 2 {
                    C64::new((k * a).cos() * inv, 0.0)
                } else {
                    C64::from_polar(inv, -k * a)
                };
            }
        });
    }

    /// Shear along `p` by `F(x, t) dt` plus momentum diffusion, on the x-major copy.
    fn kick(&mut self, t: f64) {
        let (nx, np) = (self.grid.nx(), self.grid.np());
        transpose_into(&self.pm, np, nx, &mut self.xm);
        let inv = 1.0 / np as f64;
        let dt = self.dt;
        let d = self.diffusion;
        let grid = self.grid;
        let v = &self.model.potential;
        let theta = &self.theta;
        let damp: Vec<f64> = theta.iter().map(|th| (-d * th * th * dt).exp() * inv).collect();
        self.fft_p.convolve_rows_with(&mut self.xm, |i, row| {
            let a = v.force(grid.x_grid().x(i), t) * dt;
            for (l, (c, th)) in row.iter_mut().zip(theta).enumerate() {
                *c *= if l == np / 2 {
                    C64::new((th * a).cos() * damp[l], 0.0)
                } else {
                    C64::from_polar(damp[l], -th * a)
                };
            }
        });
        transpose_into(&self.xm, nx, np, &mut self.pm);
    }
}

fn x_mean(f: &PhaseSpaceField) -> f64 {
    let xm = f.x_marginal();
    let g = f.grid().x_grid();
    let m0: f64 = xm.iter().sum();
    xm.iter().enumerate().map(|(i, w)| w * g.x(i)).sum::<f64>() / m0
}

/// One Liouville step with a freshly built propagator.
pub fn liouville_step(f: &mut PhaseSpaceField, model: &ModelSpec, dt: f64) -> Result<()> {
    PhaseSpaceStep::liouville(*f.grid(), model, dt)?.step(f)
}

/// One Fokker–Planck step with a freshly built propagator.
pub fn fokker_planck_step(f: &mut PhaseSpaceField, model: &ModelSpec, dt: f64) -> Result<()> {
    PhaseSpaceStep::new(*f.grid(), model, dt)?.step(f)
}

/// One conditioned step consuming the next increment of `noise`; returns `dy`.
pub fn kushner_step(f: &mut PhaseSpaceField, model: &ModelSpec, noise: &mut NoisePath, dt: f64) -> Result<f64> {
    let dw = noise.next_dw();
    Ok(PhaseSpaceStep::liouville(*f.grid(), model, dt)?.kushner_step(f, dw)?.1)
}
