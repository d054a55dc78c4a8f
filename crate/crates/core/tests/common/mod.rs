//! Property checks shared by the invariant tests and the acceptance run.
//! Each returns `Err(message)` with the minimal failing input.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use qchaos::model::{duffing_spec, PotentialSpec, SpatialGrid};
use qchaos::noise::NoisePath;
use qchaos::qct::{check_localization, check_record_fidelity, compute_t_star, Thresholds};
use qchaos::quantum::{perturb_initial, wigner_transform, DensityState, LindbladStep, MomentEvaluator, SpatialState, SplitStep};

pub type Check = fn() -> Result<(), String>;

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn run<S: Strategy>(cases: u32, s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&s, f).map_err(|e| e.to_string())
}

/// Conditioned evolution preserves the norm and the uncertainty bound.
pub fn sse_norm_and_uncertainty() -> Result<(), String> {
    let strat = (0.3f64..1.5, 0.1f64..20.0, -2.0f64..2.0, -1.0f64..1.0, any::<u64>());
    run(24, strat, |(hbar, k, x0, p0, seed)| {
        let g = SpatialGrid::new(-8.0, 8.0, 256).unwrap();
        let m = duffing_spec().with_hbar(hbar).with_k(k);
        let dt = m.period() / 400.0;
        let mut prop = SplitStep::new(g, &m, dt).unwrap();
        let mut eval = MomentEvaluator::new(g, hbar);
        let mut psi = SpatialState::coherent(g, hbar, x0, p0, (hbar / 2.0).sqrt());
        let mut noise = NoisePath::new(seed, dt).unwrap();
        for _ in 0..4 {
            prop.sse_evolve_noise(&mut psi, &mut noise, 25, |_| {}).unwrap();
            let norm = psi.norm_sq();
            prop_assert!((norm - 1.0).abs() < 1e-10, "norm {norm}");
            let u = eval.moments(&psi).uncertainty_product();
            prop_assert!(u >= hbar * hbar / 4.0 * (1.0 - 1e-6), "uncertainty {u} < {}", hbar * hbar / 4.0);
        }
        Ok(())
    })
}

/// The master equation keeps unit trace and a Hermitian density matrix.
pub fn lindblad_trace_and_hermiticity() -> Result<(), String> {
    let strat = (0.5f64..1.5, 0.0f64..2.0, 0.0f64..0.05, -1.5f64..1.5);
    run(12, strat, |(hbar, k, d, x0)| {
        let g = SpatialGrid::new(-7.0, 7.0, 128).unwrap();
        let m = duffing_spec().with_hbar(hbar).with_k(k).with_diffusion(d);
        let mut rho = DensityState::from_pure(&SpatialState::coherent(g, hbar, x0, 0.0, (hbar / 2.0).sqrt()));
        let mut step = LindbladStep::new(g, &m, m.period() / 200.0).unwrap();
        step.evolve(&mut rho, 40).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-8, "trace {}", rho.trace());
        prop_assert!(rho.hermiticity_error() < 1e-10, "hermiticity {}", rho.hermiticity_error());
        prop_assert!(rho.purity() <= 1.0 + 1e-8);
        Ok(())
    })
}

/// Integrating the Wigner function over p gives the position density, and
/// its total integral is the trace.
pub fn wigner_marginals() -> Result<(), String> {
    let strat = (0.2f64..1.5, -2.0f64..2.0, -2.0f64..2.0, 0.3f64..1.2, -1.5f64..1.5);
    run(32, strat, |(hbar, x0, p0, w, x1)| {
        let g = SpatialGrid::new(-8.0, 8.0, 128).unwrap();
        let a = SpatialState::coherent(g, hbar, x0, p0, w);
        let b = SpatialState::coherent(g, hbar, x1, -p0, w);
        let mut rho = DensityState::zeros(g);
        rho.add_outer(&a, 0.6);
        rho.add_outer(&b, 0.4);
        let f = wigner_transform(&rho, hbar);
        let marginal = f.x_marginal();
        let diag = rho.diagonal();
        let err = marginal.iter().zip(&diag).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "x-marginal error {err}");
        prop_assert!((f.integral() - rho.trace()).abs() < 1e-9);
        Ok(())
    })
}

/// Force derivatives agree with central differences of the potential.
pub fn force_finite_differences() -> Result<(), String> {
    let strat = (proptest::collection::vec(-2.0f64..2.0, 1..=7), -3.0f64..3.0, 0.0f64..10.0);
    run(256, strat, |(c, x, t)| {
        let v = PotentialSpec::new(c, 1.3, 2.1).unwrap();
        let h = 1e-4;
        let fd = v.force_and_derivatives(x, t);
        let scale = 1.0 + fd.force.abs() + fd.gradient.abs() + fd.curvature.abs() + v.value(x, t).abs();
        let f_fd = -(v.value(x + h, t) - v.value(x - h, t)) / (2.0 * h);
        let g_fd = (v.force(x + h, t) - v.force(x - h, t)) / (2.0 * h);
        prop_assert!((fd.force - f_fd).abs() < 1e-6 * scale);
        prop_assert!((fd.gradient - g_fd).abs() < 1e-5 * scale);
        Ok(())
    })
}

/// Equal (seed, stream) pairs give equal increments; replay is exact.
pub fn noise_determinism() -> Result<(), String> {
    run(64, (any::<u64>(), 0u64..1000, 1e-5f64..0.1), |(seed, idx, dt)| {
        let mut a = NoisePath::for_realization(seed, idx, dt).unwrap();
        let mut b = NoisePath::for_realization(seed, idx, dt).unwrap();
        let xs: Vec<f64> = (0..200).map(|_| a.next_dw()).collect();
        let ys: Vec<f64> = (0..200).map(|_| b.next_dw()).collect();
        prop_assert_eq!(&xs, &ys);
        a.rewind();
        let zs: Vec<f64> = (0..200).map(|_| a.next_dw()).collect();
        prop_assert_eq!(&xs, &zs);
        let mut c = NoisePath::for_realization(seed, idx + 1, dt).unwrap();
        prop_assert!(xs[..8] != (0..8).map(|_| c.next_dw()).collect::<Vec<_>>()[..]);
        Ok(())
    })
}

/// Phase-space displacements shift only the centroid and compose additively.
pub fn displacement_additivity() -> Result<(), String> {
    let strat = (0.05f64..1.0, -0.5f64..0.5, 0.0f64..std::f64::consts::TAU);
    run(32, strat, |(hbar, d, angle)| {
        let g = SpatialGrid::new(-8.0, 8.0, 256).unwrap();
        let psi = SpatialState::coherent(g, hbar, 0.5, -0.3, (hbar / 2.0).sqrt());
        let mut eval = MomentEvaluator::new(g, hbar);
        let m0 = eval.moments(&psi);
        let once = perturb_initial(&psi, hbar, d, angle);
        let half = perturb_initial(&perturb_initial(&psi, hbar, d / 2.0, angle), hbar, d / 2.0, angle);
        let (m1, m2) = (eval.moments(&once), eval.moments(&half));
        prop_assert!((m1.x - m0.x - d * angle.cos()).abs() < 1e-10);
        prop_assert!((m1.p - m0.p - d * angle.sin()).abs() < 1e-10);
        prop_assert!((m1.vx - m0.vx).abs() < 1e-10 && (m1.vp - m0.vp).abs() < 1e-10);
        prop_assert!((m1.x - m2.x).abs() < 1e-10 && (m1.p - m2.p).abs() < 1e-10);
        Ok(())
    })
}

/// Criterion margins move the right way with `k`, and `t*` falls with `D`.
pub fn qct_monotonicity() -> Result<(), String> {
    let th = Thresholds::default();
    let strat = (0.1f64..100.0, 1.5f64..10.0, -3.0f64..3.0, 1e-6f64..1e-2, 1.1f64..10.0);
    run(128, strat, |(k, factor, x, d, dfactor)| {
        let m = duffing_spec().with_hbar(1e-3);
        let lo = check_localization(&m.clone().with_k(k), x, 0.3, true, &th);
        let hi = check_localization(&m.clone().with_k(k * factor), x, 0.3, true, &th);
        if let (Ok(lo), Ok(hi)) = (lo, hi) {
            prop_assert!(hi.margin > lo.margin);
        }
        let a = check_record_fidelity(k, 0.01, 0.01, &th).unwrap();
        let b = check_record_fidelity(k * factor, 0.01, 0.01, &th).unwrap();
        prop_assert!(b.margin > a.margin);
        let t1 = compute_t_star(0.55, d, 1.0, 300.0, 0.5).unwrap();
        let t2 = compute_t_star(0.55, d * dfactor, 1.0, 300.0, 0.5).unwrap();
        prop_assert!(t2.t_star < t1.t_star);
        Ok(())
    })
}

/// The invariant suite, in reporting order.
pub fn invariant_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("norm and uncertainty under conditioned evolution", sse_norm_and_uncertainty as Check),
        ("trace and Hermiticity under the master equation", lindblad_trace_and_hermiticity),
        ("Wigner marginals", wigner_marginals),
        ("finite-difference force", force_finite_differences),
        ("noise determinism", noise_determinism),
        ("displacement additivity", displacement_additivity),
        ("criterion monotonicity", qct_monotonicity),
    ]
}
