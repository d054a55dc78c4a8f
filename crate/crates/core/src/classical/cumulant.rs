//! Centroid and covariance filter under Gaussian closure.
//!
//! The step mirrors the split-step wavefunction solver: half drift, then at
//! the midpoint the closed-form force kick and the measurement update, then
//! half drift. For a quadratic potential every stage is exact on Gaussian
//! states, so the two solvers agree to rounding for the same increments.
//! The measurement update is the Kalman form of the innovation terms
//! `dx̄ = √(8k) Cxx dW`, `dp̄ = √(8k) Cxp dW`, `dCxx = −8k Cxx² dt`, etc.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumulantState {
    pub x: f64,
    pub p: f64,
    pub cxx: f64,
    pub cxp: f64,
    pub cpp: f64,
    pub t: f64,
}

/// Options for [`cumulant_step`].
#[derive(Debug, Clone, Copy)]
pub struct CumulantOptions {
    /// Add the measurement backaction `ħ²k` to the momentum diffusion.
    pub quantum: bool,
    /// `Cxx` above which the Gaussian closure is declared broken.
    pub cxx_bound: f64,
}

impl Default for CumulantOptions {
    fn default() -> Self {
        Self { quantum: false, cxx_bound: f64::INFINITY }
    }
}

impl CumulantState {
    pub fn new(x: f64, p: f64, cxx: f64, cxp: f64, cpp: f64) -> Self {
        Self { x, p, cxx, cxp, cpp, t: 0.0 }
    }

    /// Gaussian minimum-uncertainty covariances for position width `sigma_x`.
    pub fn coherent(x: f64, p: f64, sigma_x: f64, hbar: f64) -> Self {
        let sp = hbar / (2.0 * sigma_x);
        Self::new(x, p, sigma_x * sigma_x, 0.0, sp * sp)
    }

    pub fn determinant(&self) -> f64 {
        self.cxx * self.cpp - self.cxp * self.cxp
    }

    fn drift(&mut self, h: f64) {
        self.x += self.p * h;
        self.cxx += 2.0 * self.cxp * h + self.cpp * h * h;
        self.cxp += self.cpp * h;
    }
}

/// One step of length `dt` driven by the increment `dw`.
pub fn cumulant_step(
    c: &mut CumulantState,
    model: &ModelSpec,
    dw: f64,
    dt: f64,
    opts: CumulantOptions,
) -> Result<()> {
    let h = 0.5 * dt / model.mass;
    let t_mid = c.t + 0.5 * dt;
    c.drift(h);

    // kick: closed-form Gaussian averages of F and ∂F
    let f = model.potential.gaussian_mean_force(c.x, c.cxx, t_mid);
    let g = model.potential.gaussian_mean_gradient(c.x, c.cxx);
    c.p += f * dt;
    let cxp0 = c.cxp;
    c.cxp += g * c.cxx * dt;
    c.cpp += 2.0 * g * cxp0 * dt + g * g * c.cxx * dt * dt + 2.0 * model.diffusion * dt;

    let k = model.k;
    if k > 0.0 {
        let a = 8.0 * k * dt;
        let s = 1.0 + a * c.cxx;
        let gain = (8.0 * k).sqrt() * dw / s;
        c.x += c.cxx * gain;
        c.p += c.cxp * gain;
        c.cpp -= a * c.cxp * c.cxp / s;
        c.cxp /= s;
        c.cxx /= s;
        if opts.quantum {
            c.cpp += 2.0 * model.backaction_diffusion() * dt;
        }
    }

    c.drift(h);
    c.t += dt;
    if ![c.x, c.p, c.cxx, c.cxp, c.cpp].iter().all(|v| v.is_finite()) {
        return Err(Error::NonfiniteState { t: c.t });
    }
    if c.cxx > opts.cxx_bound {
        return Err(Error::ClosureBreakdown { t: c.t, cxx: c.cxx, bound: opts.cxx_bound });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{duffing_spec, PotentialSpec, SpatialGrid};
    use crate::noise::NoisePath;
    use crate::quantum::{SpatialState, SplitStep};

    #[test]
    fn harmonic_matches_wavefunction() {
        let hbar = 0.05;
        let model = ModelSpec::new(PotentialSpec::harmonic(), 1.0, hbar, 2.0, 0.0).unwrap();
        let g = SpatialGrid::new(-5.0, 5.0, 256).unwrap();
        let sx = 0.2;
        let mut psi = SpatialState::coherent(g, hbar, 1.0, 0.5, sx);
        let mut c = CumulantState::coherent(1.0, 0.5, sx, hbar);
        let steps = 2000;
        let dt = 2.0 * std::f64::consts::PI / steps as f64;
        let mut prop = SplitStep::new(g, &model, dt).unwrap();
        let mut noise = NoisePath::new(4, dt).unwrap();
        let opts = CumulantOptions { quantum: true, ..Default::default() };
        for _ in 0..steps {
            let mut dw = 0.0;
            prop.sse_evolve_noise(&mut psi, &mut noise, 1, |i| dw = i.dw).unwrap();
            cumulant_step(&mut c, &model, dw, dt, opts).unwrap();
        }
        let m = psi.moments(hbar);
        for (a, b) in [(m.x, c.x), (m.p, c.p), (m.vx, c.cxx), (m.cxp, c.cxp), (m.vp, c.cpp)] {
            assert!((a - b).abs() < 1e-4, "{m:?} vs {c:?}");
        }
    }

    #[test]
    fn point_limit_is_newton() {
        let model = duffing_spec();
        let mut c = CumulantState::new(2.0, 0.0, 0.0, 0.0, 0.0);
        let dt = 1e-4;
        let steps = (model.period() / dt).round() as usize;
        let dt = model.period() / steps as f64;
        for _ in 0..steps {
            cumulant_step(&mut c, &model, 0.0, dt, CumulantOptions::default()).unwrap();
        }
        // RK4 oracle at a much finer step
        let (mut x, mut p, mut t) = (2.0, 0.0, 0.0);
        let n = 20 * steps;
        let h = model.period() / n as f64;
        let rhs = |x: f64, p: f64, t: f64| (p, model.potential.force(x, t));
        for _ in 0..n {
            let k1 = rhs(x, p, t);
            let k2 = rhs(x + 0.5 * h * k1.0, p + 0.5 * h * k1.1, t + 0.5 * h);
            let k3 = rhs(x + 0.5 * h * k2.0, p + 0.5 * h * k2.1, t + 0.5 * h);
            let k4 = rhs(x + h * k3.0, p + h * k3.1, t + h);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            p += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            t += h;
        }
        assert!((c.x - x).abs() < 1e-6 && (c.p - p).abs() < 1e-5, "{c:?} vs ({x}, {p})");
        assert_eq!(c.cxx, 0.0);
    }

    #[test]
    fn closure_bound_is_enforced() {
        let model = ModelSpec::new(PotentialSpec::free(), 1.0, 0.0, 0.0, 0.0).unwrap();
        let mut c = CumulantState::new(0.0, 0.0, 1.0, 0.0, 1.0);
        let opts = CumulantOptions { quantum: false, cxx_bound: 1.5 };
        let mut hit = false;
        for _ in 0..100 {
            if let Err(Error::ClosureBreakdown { .. }) = cumulant_step(&mut c, &model, 0.0, 0.01, opts) {
                hit = true;
                break;
            }
        }
        assert!(hit);
    }

    #[test]
    fn covariance_stays_positive_under_measurement() {
        let model = duffing_spec().with_hbar(0.01).with_k(10.0);
        let mut c = CumulantState::coherent(2.0, 0.0, 0.07, 0.01);
        let dt = model.period() / 1000.0;
        let mut noise = NoisePath::new(8, dt).unwrap();
        let opts = CumulantOptions { quantum: true, ..Default::default() };
        for _ in 0..5000 {
            cumulant_step(&mut c, &model, noise.next_dw(), dt, opts).unwrap();
            assert!(c.cxx >= 0.0 && c.cpp >= 0.0 && c.determinant() >= -1e-15);
        }
    }
}
