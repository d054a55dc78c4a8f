//! Maximal Lyapunov exponents of conditioned and unconditioned evolutions
//! with the noise realization held fixed.
//!
//! A fiducial and a perturbed copy consume the same increments. Every
//! renormalization interval the centroid offset in the (⟨x⟩, ⟨p⟩) plane is
//! measured, its log-stretch accumulated, and the perturbed copy pulled back
//! to distance `δ0` along the current offset direction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::newton::{rk4_step, rk4_tangent_step, TangentState};
use crate::classical::{cumulant_step, CumulantOptions, CumulantState, LangevinWalker};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SpatialGrid};
use crate::noise::NoisePath;
use crate::quantum::{Displacer, MomentEvaluator, SpatialState, SplitStep};
use crate::spectral::C64;

/// Log-stretch per interval above which a warning is logged.
const WARN_LOG_STRETCH: f64 = 3.0;
/// Log-stretch per interval above which the run is aborted.
const MAX_LOG_STRETCH: f64 = 6.0;

/// Dynamics whose centroid divergence is tracked.
pub trait DivergenceSystem {
    type State: Clone;
    fn dt(&self) -> f64;
    /// Advance by one step per increment in `dws`.
    fn advance(&mut self, state: &mut Self::State, dws: &[f64]) -> Result<()>;
    fn centroid(&mut self, state: &Self::State) -> (f64, f64);
    /// Shift the centroid by `(dx, dp)`.
    fn displace(&mut self, state: &mut Self::State, dx: f64, dp: f64);
    /// Pull `pert` towards `fid` along their difference:
    /// `pert ← fid + factor·(pert − fid)`, renormalized where needed.
    fn rescale(&mut self, fid: &Self::State, pert: &mut Self::State, factor: f64);
    /// Size of the full state difference used to renormalize under
    /// [`Renormalization::Rescale`]; `None` means the centroid metric.
    fn tangent_norm(&mut self, _fid: &Self::State, _pert: &Self::State) -> Option<f64> {
        None
    }
}

/// Wavefunction under the conditioned (or, for `k = 0`, unitary) evolution.
pub struct QuantumSystem {
    prop: SplitStep,
    eval: MomentEvaluator,
    disp: Displacer,
    measured: bool,
}

impl QuantumSystem {
    pub fn new(grid: SpatialGrid, model: &ModelSpec, dt: f64) -> Result<Self> {
        Ok(Self {
            prop: SplitStep::new(grid, model, dt)?,
            eval: MomentEvaluator::new(grid, model.hbar),
            disp: Displacer::new(grid, model.hbar),
            measured: model.k > 0.0,
        })
    }
}

impl DivergenceSystem for QuantumSystem {
    type State = SpatialState;

    fn dt(&self) -> f64 {
        self.prop.dt()
    }

    fn advance(&mut self, state: &mut SpatialState, dws: &[f64]) -> Result<()> {
        if self.measured {
            self.prop.sse_evolve(state, dws, |_| {})
        } else {
            self.prop.isolated_evolve(state, dws.len())
        }
    }

    fn centroid(&mut self, state: &SpatialState) -> (f64, f64) {
        self.eval.centroid(state)
    }

    fn displace(&mut self, state: &mut SpatialState, dx: f64, dp: f64) {
        self.disp.displace(state, dx, dp);
    }

    fn rescale(&mut self, fid: &SpatialState, pert: &mut SpatialState, factor: f64) {
        let phase = relative_phase(fid, pert);
        for (b, a) in pert.amplitudes_mut().iter_mut().zip(fid.amplitudes()) {
            *b = a + (*b * phase - a) * factor;
        }
        pert.normalize();
    }

    fn tangent_norm(&mut self, fid: &SpatialState, pert: &SpatialState) -> Option<f64> {
        let phase = relative_phase(fid, pert);
        let dx = fid.grid().dx();
        let s: f64 = pert.amplitudes().iter().zip(fid.amplitudes()).map(|(b, a)| (b * phase - a).norm_sqr()).sum();
        Some((s * dx).sqrt())
    }
}

/// Unit phase `e^{-iφ}` with `φ = arg⟨fid|pert⟩`; removes the global-phase
/// part of the difference, which no observable sees.
fn relative_phase(fid: &SpatialState, pert: &SpatialState) -> C64 {
    let overlap: C64 = fid.amplitudes().iter().zip(pert.amplitudes()).map(|(a, b)| a.conj() * b).sum();
    if overlap.norm() > 0.0 {
        overlap.conj() / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Gaussian-closure centroid filter.
pub struct CumulantSystem {
    model: ModelSpec,
    dt: f64,
    opts: CumulantOptions,
}

impl CumulantSystem {
    pub fn new(model: &ModelSpec, dt: f64, opts: CumulantOptions) -> Self {
        Self { model: model.clone(), dt, opts }
    }
}

impl DivergenceSystem for CumulantSystem {
    type State = CumulantState;

    fn dt(&self) -> f64 {
        self.dt
    }

    fn advance(&mut self, c: &mut CumulantState, dws: &[f64]) -> Result<()> {
        for &dw in dws {
            cumulant_step(c, &self.model, dw, self.dt, self.opts)?;
        }
        Ok(())
    }

    fn centroid(&mut self, c: &CumulantState) -> (f64, f64) {
        (c.x, c.p)
    }

    fn displace(&mut self, c: &mut CumulantState, dx: f64, dp: f64) {
        c.x += dx;
        c.p += dp;
    }

    fn rescale(&mut self, fid: &CumulantState, c: &mut CumulantState, factor: f64) {
        let mix = |a: f64, b: f64| a + (b - a) * factor;
        c.x = mix(fid.x, c.x);
        c.p = mix(fid.p, c.p);
        c.cxx = mix(fid.cxx, c.cxx);
        c.cxp = mix(fid.cxp, c.cxp);
        c.cpp = mix(fid.cpp, c.cpp);
    }
}

/// Langevin walker with its clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinState {
    pub walker: LangevinWalker,
    /// Steps taken; the clock is `step · dt`, which keeps long runs free of
    /// accumulated rounding in `t`.
    pub step: u64,
}

impl LangevinState {
    pub fn new(q: f64, p: f64) -> Self {
        Self { walker: LangevinWalker::new(q, p), step: 0 }
    }
}

pub struct LangevinSystem {
    model: ModelSpec,
    dt: f64,
}

impl LangevinSystem {
    pub fn new(model: &ModelSpec, dt: f64) -> Self {
        Self { model: model.clone(), dt }
    }
}

impl DivergenceSystem for LangevinSystem {
    type State = LangevinState;

    fn dt(&self) -> f64 {
        self.dt
    }

    fn advance(&mut self, s: &mut LangevinState, dws: &[f64]) -> Result<()> {
        for &dw in dws {
            s.walker.step(&self.model, s.step as f64 * self.dt, self.dt, dw)?;
            s.step += 1;
        }
        Ok(())
    }

    fn centroid(&mut self, s: &LangevinState) -> (f64, f64) {
        (s.walker.q, s.walker.p)
    }

    fn displace(&mut self, s: &mut LangevinState, dx: f64, dp: f64) {
        s.walker.q += dx;
        s.walker.p += dp;
    }

    fn rescale(&mut self, fid: &LangevinState, s: &mut LangevinState, factor: f64) {
        s.walker.q = fid.walker.q + (s.walker.q - fid.walker.q) * factor;
        s.walker.p = fid.walker.p + (s.walker.p - fid.walker.p) * factor;
    }
}

/// Noiseless Newtonian flow integrated with RK4; increments are ignored.
/// Shares its integrator with [`classical_tangent_oracle`], so the two
/// estimators follow the same fiducial orbit.
pub struct NewtonSystem {
    model: ModelSpec,
    dt: f64,
}

impl NewtonSystem {
    pub fn new(model: &ModelSpec, dt: f64) -> Self {
        Self { model: model.clone(), dt }
    }
}

impl DivergenceSystem for NewtonSystem {
    type State = LangevinState;

    fn dt(&self) -> f64 {
        self.dt
    }

    fn advance(&mut self, s: &mut LangevinState, dws: &[f64]) -> Result<()> {
        for _ in dws {
            let (q, p) = rk4_step(&self.model, s.walker.q, s.walker.p, s.step as f64 * self.dt, self.dt);
            s.walker.q = q;
            s.walker.p = p;
            s.step += 1;
        }
        if !(s.walker.q.is_finite() && s.walker.p.is_finite()) {
            return Err(Error::NonfiniteState { t: s.step as f64 * self.dt });
        }
        Ok(())
    }

    fn centroid(&mut self, s: &LangevinState) -> (f64, f64) {
        (s.walker.q, s.walker.p)
    }

    fn displace(&mut self, s: &mut LangevinState, dx: f64, dp: f64) {
        s.walker.q += dx;
        s.walker.p += dp;
    }

    fn rescale(&mut self, fid: &LangevinState, s: &mut LangevinState, factor: f64) {
        s.walker.q = fid.walker.q + (s.walker.q - fid.walker.q) * factor;
        s.walker.p = fid.walker.p + (s.walker.p - fid.walker.p) * factor;
    }
}

/// How the perturbed copy is pulled back after each interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Renormalization {
    /// Shrink the full state difference by `δ0/Δ`: the tangent-vector
    /// rescaling of the classical method, applied to the wavefunction.
    #[default]
    Rescale,
    /// Displace the perturbed copy so its centroid sits at the fiducial
    /// centroid plus `δ0` along the current offset.
    Redisplace,
    /// Replace the perturbed copy by a displaced clone of the fiducial.
    CloneFiducial,
    /// Never pull back; the finite-time exponent is `ln(Δ(t)/Δ(0))/t`.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceParams {
    pub delta0: f64,
    /// Direction of the initial offset in the scaled (x, p) plane.
    pub angle: f64,
    /// Steps per renormalization (or sampling) interval.
    pub interval_steps: usize,
    pub intervals: usize,
    pub renormalization: Renormalization,
    /// Axis scales `(σx, σp)`; the metric is `√((δx/σx)² + (δp/σp)²)`.
    pub scales: (f64, f64),
}

impl DivergenceParams {
    fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta0 must be > 0, got {}", self.delta0)));
        }
        if self.interval_steps == 0 || self.intervals == 0 {
            return Err(Error::InvalidParameter("need at least one step and one interval".into()));
        }
        if !(self.scales.0 > 0.0 && self.scales.1 > 0.0) {
            return Err(Error::InvalidParameter("axis scales must be > 0".into()));
        }
        Ok(())
    }
}

/// One realization's divergence history, sampled at interval ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceCurve {
    pub realization: u64,
    pub times: Vec<f64>,
    /// Finite-time exponent `λ_s(t)`.
    pub lambda: Vec<f64>,
    /// Plane distance before pull-back.
    pub delta: Vec<f64>,
    /// Position-only `|⟨x⟩ − ⟨x_fid⟩|` before pull-back.
    pub delta_x: Vec<f64>,
    pub fiducial: Vec<(f64, f64)>,
}

impl DivergenceCurve {
    pub fn final_lambda(&self) -> f64 {
        *self.lambda.last().unwrap_or(&f64::NAN)
    }
}

/// Track one fiducial/perturbed pair under the increments of `noise`.
pub fn divergence_run<S: DivergenceSystem>(
    sys: &mut S,
    initial: &S::State,
    noise: &mut NoisePath,
    params: &DivergenceParams,
) -> Result<DivergenceCurve> {
    params.validate()?;
    let (sx, sp) = params.scales;
    let (ux, up) = (params.angle.cos(), params.angle.sin());
    let mut fid = initial.clone();
    let mut pert = initial.clone();
    sys.displace(&mut pert, params.delta0 * ux * sx, params.delta0 * up * sp);

    let dt = sys.dt();
    let mut dws = vec![0.0; params.interval_steps];
    let mut curve = DivergenceCurve {
        realization: noise.stream(),
        times: Vec::with_capacity(params.intervals),
        lambda: Vec::with_capacity(params.intervals),
        delta: Vec::with_capacity(params.intervals),
        delta_x: Vec::with_capacity(params.intervals),
        fiducial: Vec::with_capacity(params.intervals),
    };
    let mut log_sum = 0.0;
    let mut warned = false;
    let d0 = scaled_distance(sys, &fid, &pert, params.scales);
    let mut d_ref = d0;
    let eps = sys.tangent_norm(&fid, &pert).unwrap_or(d0);
    for i in 0..params.intervals {
        dws.iter_mut().for_each(|d| *d = noise.next_dw());
        sys.advance(&mut fid, &dws)?;
        sys.advance(&mut pert, &dws)?;
        let t = ((i + 1) * params.interval_steps) as f64 * dt;
        let f = sys.centroid(&fid);
        let g = sys.centroid(&pert);
        let (ox, op) = ((g.0 - f.0) / sx, (g.1 - f.1) / sp);
        let d = ox.hypot(op);
        if !d.is_finite() {
            return Err(Error::NonfiniteState { t });
        }
        let mut check = |ls: f64| -> Result<()> {
            if ls > MAX_LOG_STRETCH {
                return Err(Error::StretchOverflow { t, stretch: ls.exp() });
            }
            if ls > WARN_LOG_STRETCH && !warned {
                log::warn!("log-stretch {ls:.2} per interval at t={t:.3}; consider a shorter interval");
                warned = true;
            }
            Ok(())
        };
        let lambda = match params.renormalization {
            Renormalization::None => (d / d0).ln() / t,
            Renormalization::Rescale => {
                // ln Δ of the unrenormalized pair = ln Δ now + Σ ln(shrink)
                let lambda = (log_sum + (d / d0).ln()) / t;
                let n = sys.tangent_norm(&fid, &pert).unwrap_or(d);
                if !(n.is_finite() && n > 0.0) {
                    return Err(Error::NonfiniteState { t });
                }
                let ls = (n / eps).ln();
                check(ls)?;
                log_sum += ls;
                sys.rescale(&fid, &mut pert, eps / n);
                lambda
            }
            variant => {
                let ls = (d / d_ref).ln();
                check(ls)?;
                log_sum += ls;
                let (nx, np) = if d > 0.0 { (ox / d, op / d) } else { (ux, up) };
                let (tx, tp) = (f.0 + params.delta0 * nx * sx, f.1 + params.delta0 * np * sp);
                if variant == Renormalization::CloneFiducial {
                    pert = fid.clone();
                    sys.displace(&mut pert, tx - f.0, tp - f.1);
                } else {
                    sys.displace(&mut pert, tx - g.0, tp - g.1);
                }
                d_ref = scaled_distance(sys, &fid, &pert, params.scales);
                if !(d_ref > 0.0) {
                    return Err(Error::NonfiniteState { t });
                }
                log_sum / t
            }
        };
        curve.times.push(t);
        curve.lambda.push(lambda);
        curve.delta.push(d);
        curve.delta_x.push((g.0 - f.0).abs());
        curve.fiducial.push(f);
    }
    Ok(curve)
}

fn scaled_distance<S: DivergenceSystem>(sys: &mut S, a: &S::State, b: &S::State, scales: (f64, f64)) -> f64 {
    let f = sys.centroid(a);
    let g = sys.centroid(b);
    ((g.0 - f.0) / scales.0).hypot((g.1 - f.1) / scales.1)
}

/// Ensemble summary of finite-time exponents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub times: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    /// Final finite-time exponent of each realization.
    pub finals: Vec<f64>,
    pub mean: f64,
    /// Standard deviation across realizations.
    pub std: f64,
    pub ensemble_n: usize,
    #[serde(skip)]
    pub curves: Vec<DivergenceCurve>,
}

impl LyapunovEstimate {
    pub fn from_curves(curves: Vec<DivergenceCurve>) -> Self {
        let n = curves.len();
        let len = curves.iter().map(|c| c.lambda.len()).min().unwrap_or(0);
        let times = curves.first().map(|c| c.times[..len].to_vec()).unwrap_or_default();
        let mut mean_curve = vec![0.0; len];
        let mut std_curve = vec![0.0; len];
        for j in 0..len {
            let (m, s) = mean_std(curves.iter().map(|c| c.lambda[j]));
            mean_curve[j] = m;
            std_curve[j] = s;
        }
        let finals: Vec<f64> = curves.iter().map(|c| c.final_lambda()).collect();
        let (mean, std) = mean_std(finals.iter().copied());
        Self { times, mean_curve, std_curve, finals, mean, std, ensemble_n: n, curves }
    }
}

/// Sample mean and (n−1)-normalized standard deviation; zero spread for
/// a single sample.
pub fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = v.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = v.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}

/// Fixed-noise Lyapunov estimate over `ensemble_n` realizations, run in
/// parallel. Realization `i` draws from stream `i` of `base_seed`, so the
/// result does not depend on the worker count.
pub fn lyapunov_fixed_noise<S, F>(
    make_system: F,
    initial: &S::State,
    base_seed: u64,
    ensemble_n: usize,
    params: &DivergenceParams,
) -> Result<LyapunovEstimate>
where
    S: DivergenceSystem,
    S::State: Sync,
    F: Fn() -> Result<S> + Sync,
{
    if ensemble_n == 0 {
        return Err(Error::InvalidParameter("ensemble_n must be >= 1".into()));
    }
    let curves = (0..ensemble_n as u64)
        .into_par_iter()
        .map(|i| {
            let mut sys = make_system()?;
            let mut noise = NoisePath::for_realization(base_seed, i, sys.dt())?;
            divergence_run(&mut sys, initial, &mut noise, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovEstimate::from_curves(curves))
}

/// Result of the tangent-space integration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentEstimate {
    pub lambda: f64,
    /// Finite-time exponent after each renormalization.
    pub times: Vec<f64>,
    pub curve: Vec<f64>,
}

/// Maximal exponent of the noiseless Newtonian flow from the variational
/// equations, renormalizing the tangent vector every `renorm_steps`.
/// `dt` is the integration step in model time units.
pub fn classical_tangent_oracle(
    model: &ModelSpec,
    x0: f64,
    p0: f64,
    dt: f64,
    steps: usize,
    renorm_steps: usize,
) -> Result<TangentEstimate> {
    if model.diffusion > 0.0 {
        return Err(Error::InvalidParameter("tangent oracle needs a deterministic flow (D = 0)".into()));
    }
    if !(dt > 0.0) || steps == 0 || renorm_steps == 0 {
        return Err(Error::InvalidParameter("dt, steps and renorm_steps must be positive".into()));
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut s = TangentState { x: x0, p: p0, dx: inv_sqrt2, dp: inv_sqrt2 };
    let mut log_sum = 0.0;
    let mut times = Vec::with_capacity(steps / renorm_steps + 1);
    let mut curve = Vec::with_capacity(steps / renorm_steps + 1);
    for i in 0..steps {
        s = rk4_tangent_step(model, &s, i as f64 * dt, dt);
        if (i + 1) % renorm_steps == 0 || i + 1 == steps {
            let n = s.dx.hypot(s.dp);
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::NonfiniteState { t: (i + 1) as f64 * dt });
            }
            log_sum += n.ln();
            s.dx /= n;
            s.dp /= n;
            let t = (i + 1) as f64 * dt;
            times.push(t);
            curve.push(log_sum / t);
        }
    }
    Ok(TangentEstimate { lambda: *curve.last().unwrap(), times, curve })
}

/// Tangent-space exponents from several starting points, run in parallel;
/// returns the per-point estimates in input order.
pub fn tangent_oracle_ensemble(
    model: &ModelSpec,
    points: &[(f64, f64)],
    dt: f64,
    steps: usize,
    renorm_steps: usize,
) -> Result<Vec<TangentEstimate>> {
    points
        .par_iter()
        .map(|&(x, p)| classical_tangent_oracle(model, x, p, dt, steps, renorm_steps))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialSpec;

    #[test]
    fn harmonic_oracle_is_zero() {
        let m = ModelSpec::new(PotentialSpec::harmonic(), 1.0, 0.0, 0.0, 0.0).unwrap();
        let dt = 1e-3;
        let r = classical_tangent_oracle(&m, 1.0, 0.0, dt, 2_000_000, 1000).unwrap();
        assert!(r.lambda.abs() < 1e-3, "{}", r.lambda);
    }

    #[test]
    fn inverted_oscillator_oracle() {
        let m = ModelSpec::new(PotentialSpec::new(vec![0.0, 0.0, -0.5], 0.0, 0.0).unwrap(), 1.0, 0.0, 0.0, 0.0).unwrap();
        // start on the origin so the orbit stays bounded; the tangent still grows
        let r = classical_tangent_oracle(&m, 0.0, 0.0, 1e-3, 50_000, 100).unwrap();
        assert!((r.lambda - 1.0).abs() < 1e-4, "{}", r.lambda);
    }

    #[test]
    fn displaced_pair_in_linear_flow() {
        // free particle: offset in p grows linearly, exponent → 0
        let m = ModelSpec::new(PotentialSpec::free(), 1.0, 0.0, 0.0, 0.0).unwrap();
        let mut sys = LangevinSystem::new(&m, 0.01);
        let mut noise = NoisePath::new(1, 0.01).unwrap();
        let params = DivergenceParams {
            delta0: 1e-6,
            angle: 0.0,
            interval_steps: 100,
            intervals: 500,
            renormalization: Renormalization::Redisplace,
            scales: (1.0, 1.0),
        };
        let c = divergence_run(&mut sys, &LangevinState::new(0.0, 1.0), &mut noise, &params).unwrap();
        assert!(c.final_lambda().abs() < 0.02, "{}", c.final_lambda());
    }

    #[test]
    fn stretch_overflow_is_reported() {
        let m = ModelSpec::new(PotentialSpec::new(vec![0.0, 0.0, -0.5], 0.0, 0.0).unwrap(), 1.0, 0.0, 0.0, 0.0).unwrap();
        let mut sys = LangevinSystem::new(&m, 0.01);
        let mut noise = NoisePath::new(1, 0.01).unwrap();
        let params = DivergenceParams {
            delta0: 1e-8,
            angle: 0.3,
            interval_steps: 800,
            intervals: 2,
            renormalization: Renormalization::Redisplace,
            scales: (1.0, 1.0),
        };
        let r = divergence_run(&mut sys, &LangevinState::new(0.0, 0.0), &mut noise, &params);
        assert!(matches!(r, Err(Error::StretchOverflow { .. })), "{r:?}");
    }
}
