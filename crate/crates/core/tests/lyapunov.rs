//! Classical exponents against a test-side integrator, and the insensitivity
//! of the renormalized pair to its offset and step size.

use qchaos::lyapunov::{classical_tangent_oracle, divergence_run, DivergenceParams, LangevinState, NewtonSystem, Renormalization};
use qchaos::model::{duffing_spec, SpatialGrid};
use qchaos::noise::NoisePath;
use qchaos::quantum::{MomentEvaluator, SpatialState, SplitStep};

use std::f64::consts::FRAC_1_SQRT_2;

const OMEGA: f64 = 6.07;

fn force(x: f64, t: f64) -> f64 {
    20.0 * x - 2.0 * x.powi(3) - 10.0 * (OMEGA * t).cos()
}

/// Benettin two-orbit estimate with velocity Verlet, per drive period.
fn verlet_pair_lambda(x0: f64, p0: f64, steps_per_period: usize, periods: usize) -> f64 {
    let period = std::f64::consts::TAU / OMEGA;
    let h = period / steps_per_period as f64;
    let d0 = 1e-8;
    let step = |(x, p): (f64, f64), t: f64| {
        let ph = p + 0.5 * h * force(x, t);
        let xn = x + h * ph;
        (xn, ph + 0.5 * h * force(xn, t + h))
    };
    let (mut a, mut b) = ((x0, p0), (x0 + d0 * FRAC_1_SQRT_2, p0 + d0 * FRAC_1_SQRT_2));
    let mut sum = 0.0;
    for n in 0..periods * steps_per_period {
        let t = n as f64 * h;
        a = step(a, t);
        b = step(b, t);
        if (n + 1) % steps_per_period == 0 {
            let (dx, dp) = (b.0 - a.0, b.1 - a.1);
            let d = dx.hypot(dp);
            sum += (d / d0).ln();
            b = (a.0 + dx * d0 / d, a.1 + dp * d0 / d);
        }
    }
    sum / periods as f64
}

#[test]
fn test_force_matches_model() {
    let m = duffing_spec();
    for &(x, t) in &[(0.3, 0.0), (-2.1, 0.4), (3.3, 1.7)] {
        assert!((m.potential.force(x, t) - force(x, t)).abs() < 1e-12);
    }
}

#[test]
fn tangent_oracle_follows_the_pair_on_the_same_orbit() {
    // eight periods: both integrators still track one orbit
    let m = duffing_spec();
    let period = m.period();
    for &(x, p) in &[(2.0, 0.0), (1.7, 0.4), (2.3, -0.3), (0.5, 3.0), (-2.5, -1.0)] {
        let lib = classical_tangent_oracle(&m, x, p, period / 2000.0, 8 * 2000, 2000).unwrap().lambda * period;
        let ours = verlet_pair_lambda(x, p, 16000, 8);
        assert!((lib - ours).abs() < 1e-4, "({x}, {p}): library {lib:.6}, test-side {ours:.6}");
    }
}

#[test]
fn sea_averaged_exponent_matches_independent_integration() {
    // single orbits wander between sticky and strongly mixing regions, so only
    // the average over many starts is comparable
    let m = duffing_spec();
    let period = m.period();
    let starts: Vec<(f64, f64)> = (0..24)
        .map(|i| {
            let a = i as f64 * 0.26;
            (2.0 + 0.8 * a.cos(), 1.5 * a.sin())
        })
        .collect();
    let n = starts.len() as f64;
    let (mut lib, mut ours) = (0.0, 0.0);
    for &(x, p) in &starts {
        lib += classical_tangent_oracle(&m, x, p, period / 500.0, 1000 * 500, 500).unwrap().lambda * period / n;
        ours += verlet_pair_lambda(x, p, 2000, 1000) / n;
    }
    assert!((lib - ours).abs() < 0.04 * ours, "library {lib:.4}, test-side {ours:.4} per period");
    assert!(ours > 0.45 && ours < 0.7, "chaotic sea exponent {ours:.4}");
}

fn newton_lambda(delta0: f64, spp: usize, periods: usize) -> f64 {
    let m = duffing_spec();
    let dt = m.period() / spp as f64;
    let mut sys = NewtonSystem::new(&m, dt);
    let mut noise = NoisePath::new(0, dt).unwrap();
    let params = DivergenceParams {
        delta0,
        angle: 0.7,
        interval_steps: spp,
        intervals: periods,
        renormalization: Renormalization::Rescale,
        scales: (1.0, 1.0),
    };
    divergence_run(&mut sys, &LangevinState::new(2.0, 0.0), &mut noise, &params).unwrap().final_lambda() * m.period()
}

#[test]
fn renormalized_pair_is_insensitive_to_the_offset() {
    let a = newton_lambda(1e-7, 500, 300);
    let b = newton_lambda(1e-9, 500, 300);
    assert!((a - b).abs() < 1e-3 * a.abs().max(0.1), "{a} vs {b}");
}

#[test]
fn halving_the_step_leaves_the_finite_time_exponent_unchanged() {
    // short enough that round-off and truncation stay below chaotic amplification
    let a = newton_lambda(1e-8, 500, 5);
    let b = newton_lambda(1e-8, 1000, 5);
    assert!((a - b).abs() < 1e-4 * a.abs(), "{a} vs {b}");
}

#[test]
fn conditioned_centroid_converges_under_step_halving() {
    let hbar = 0.1;
    let m = duffing_spec().with_hbar(hbar).with_k(1.0);
    let g = SpatialGrid::new(-6.5, 6.5, 512).unwrap();
    let fine_steps = 800;
    let h = m.period() / fine_steps as f64;
    let mut noise = NoisePath::new(3, h).unwrap();
    let fine: Vec<f64> = (0..fine_steps).map(|_| noise.next_dw()).collect();
    let coarsen = |dws: &[f64]| dws.chunks(2).map(|c| c[0] + c[1]).collect::<Vec<f64>>();
    let mid = coarsen(&fine);
    let coarse = coarsen(&mid);

    let centroid = |dws: &[f64]| {
        let dt = m.period() / dws.len() as f64;
        let mut prop = SplitStep::new(g, &m, dt).unwrap();
        let mut psi = SpatialState::coherent(g, hbar, 2.0, 0.0, (hbar / 2.0).sqrt());
        prop.sse_evolve(&mut psi, dws, |_| {}).unwrap();
        let mo = MomentEvaluator::new(g, hbar).moments(&psi);
        (mo.x, mo.p)
    };
    let (c, md, f) = (centroid(&coarse), centroid(&mid), centroid(&fine));
    let e1 = (c.0 - md.0).hypot(c.1 - md.1);
    let e2 = (md.0 - f.0).hypot(md.1 - f.1);
    // a small fraction of the packet width, sqrt(hbar/2) ~ 0.22
    assert!(e1 < 2e-3 && e2 < 2e-3, "successive differences {e1:.3e}, {e2:.3e}");
}
