use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Point particle under `dq = p/m dt`, `dp = F dt + √(2D) dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinWalker {
    pub q: f64,
    pub p: f64,
}

impl LangevinWalker {
    pub fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    /// Stochastic Heun step from time `t`; the same `dw` enters predictor and
    /// corrector, which makes the scheme strong order one for additive noise.
    pub fn step(&mut self, model: &ModelSpec, t: f64, dt: f64, dw: f64) -> Result<()> {
        let m = model.mass;
        let noise = (2.0 * model.diffusion).sqrt() * dw;
        let f0 = model.potential.force(self.q, t);
        let q1 = self.q + self.p / m * dt;
        let p1 = self.p + f0 * dt + noise;
        let f1 = model.potential.force(q1, t + dt);
        self.q += 0.5 * (self.p + p1) / m * dt;
        self.p += 0.5 * (f0 + f1) * dt + noise;
        if !(self.q.is_finite() && self.p.is_finite()) {
            return Err(Error::NonfiniteState { t: t + dt });
        }
        Ok(())
    }
}

/// Free-function form of [`LangevinWalker::step`].
pub fn langevin_step(w: &mut LangevinWalker, model: &ModelSpec, t: f64, dt: f64, dw: f64) -> Result<()> {
    w.step(model, t, dt, dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PotentialSpec, ModelSpec};
    use crate::noise::NoisePath;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_energy_drift() {
        let model = ModelSpec::new(PotentialSpec::harmonic(), 1.0, 0.0, 0.0, 0.0).unwrap();
        let mut w = LangevinWalker::new(1.0, 0.0);
        let steps = (2.0 * PI / 1e-3).round() as usize;
        let dt = 2.0 * PI / steps as f64;
        for s in 0..steps {
            w.step(&model, s as f64 * dt, dt, 0.0).unwrap();
        }
        let e = 0.5 * (w.q * w.q + w.p * w.p);
        assert!((e - 0.5).abs() < 1e-4 * 0.5, "{e}");
    }

    #[test]
    fn diffusion_law() {
        let d = 0.2;
        let model = ModelSpec::new(PotentialSpec::free(), 1.0, 0.0, 0.0, d).unwrap();
        let (n, steps, dt) = (4000, 100, 0.01);
        let mut p2 = Vec::with_capacity(n);
        for r in 0..n {
            let mut noise = NoisePath::for_realization(17, r as u64, dt).unwrap();
            let mut w = LangevinWalker::new(0.0, 0.0);
            for s in 0..steps {
                w.step(&model, s as f64 * dt, dt, noise.next_dw()).unwrap();
            }
            p2.push(w.p * w.p);
        }
        let mean = p2.iter().sum::<f64>() / n as f64;
        let sd = (p2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
        let slope = mean / (steps as f64 * dt);
        assert!((slope - 2.0 * d).abs() < 3.0 * sd, "slope {slope}");
    }
}
