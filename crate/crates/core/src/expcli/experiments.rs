use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::classical::{rk4_step, CumulantOptions, CumulantState, PhaseSpaceStep};
use crate::error::{Error, Result};
use crate::field::{relative_l1, PhaseSpaceField};
use crate::lyapunov::{
    divergence_run, lyapunov_fixed_noise, mean_std, tangent_oracle_ensemble, CumulantSystem, DivergenceParams,
    DivergenceSystem, LangevinState, LangevinSystem, LyapunovEstimate, NewtonSystem, QuantumSystem,
};
use crate::model::{ModelSpec, PhaseSpaceGrid, SpatialGrid};
use crate::noise::NoisePath;
use crate::qct::{
    accessible_area, check_weak_qct, compute_t_star, initial_length, orbit_action, strong_qct_report,
    strong_qct_report_averaged, weak_qct_verdict, Action, Evaluation, QctReport, StrongQctParams, WeakQctVerdict,
};
use crate::quantum::{wigner_grid, wigner_transform, DensityState, LindbladStep, MomentEvaluator, SpatialState, SplitStep};

use super::config::{ExperimentConfig, SystemKind};
use super::output::{label, meta, write_json, NdjsonWriter};
use super::stats::{kde_grid, ks_two_sample, loglog_slope, scott_bandwidth};

/// Steps between outputs and the number of outputs in a run.
fn cadence(cfg: &ExperimentConfig) -> (usize, usize) {
    let spp = cfg.steps_per_period();
    let every = ((cfg.numerics.sample_every * spp as f64).round() as usize).max(1);
    let total = cfg.periods(cfg.numerics.t_total) * spp;
    (every, total.div_ceil(every))
}

fn snapshot_due(cfg: &ExperimentConfig, period: f64, last: bool) -> bool {
    match cfg.output.snapshot_every {
        Some(every) if every > 0.0 => last || (period / every - (period / every).round()).abs() < 1e-9,
        _ => last,
    }
}

// ---------------------------------------------------------------------------
// strong QCT

#[derive(Debug, Clone, Serialize)]
pub struct StrongQctSummary {
    pub k: f64,
    pub hbar: f64,
    pub ensemble_n: usize,
    pub periods: usize,
    pub steps_per_period: usize,
    pub max_sigma_x: f64,
    pub final_sigma_x_mean: f64,
    pub action: f64,
    pub all_satisfied: bool,
    pub report: QctReport,
}

#[derive(Serialize)]
struct TrajectoryLine {
    realization: u64,
    t: f64,
    x: f64,
    p: f64,
    #[serde(rename = "Vx")]
    vx: f64,
    #[serde(rename = "Vp")]
    vp: f64,
    #[serde(rename = "Cxp")]
    cxp: f64,
    dy: f64,
}

/// Conditioned trajectories from the configured coherent state, plus the
/// strong-QCT report for the configured `(ħ, k, Δt, Δx)`.
pub fn run_strong_qct(cfg: &ExperimentConfig, out: &Path) -> Result<StrongQctSummary> {
    let model = cfg.model_spec()?;
    let grid = cfg.spatial_grid()?;
    let spp = cfg.steps_per_period();
    let dt = model.period() / spp as f64;
    let (every, samples) = cadence(cfg);
    let (x0, p0, width) = (cfg.initial.x0, cfg.initial.p0, cfg.width());

    let runs = (0..cfg.numerics.ensemble_n as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<TrajectoryLine>, SpatialState)> {
            let mut prop = SplitStep::new(grid, &model, dt)?;
            let mut eval = MomentEvaluator::new(grid, model.hbar);
            let mut psi = SpatialState::coherent(grid, model.hbar, x0, p0, width);
            let mut noise = NoisePath::for_realization(cfg.numerics.base_seed, i, dt)?;
            let mut lines = Vec::with_capacity(samples + 1);
            let push = |lines: &mut Vec<TrajectoryLine>, m: crate::quantum::MomentSet, dy: f64| {
                lines.push(TrajectoryLine { realization: i, t: m.t, x: m.x, p: m.p, vx: m.vx, vp: m.vp, cxp: m.cxp, dy });
            };
            push(&mut lines, eval.moments(&psi), 0.0);
            for _ in 0..samples {
                let mut dy = 0.0;
                if model.k > 0.0 {
                    prop.sse_evolve_noise(&mut psi, &mut noise, every, |s| dy += s.dy)?;
                } else {
                    prop.isolated_evolve(&mut psi, every)?;
                }
                push(&mut lines, eval.moments(&psi), dy);
            }
            Ok((lines, psi))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut w = NdjsonWriter::create(&out.join("trajectory-strong-qct.ndjson"), meta(cfg, json!({"t_unit": "model time"})))?;
    let mut max_sigma_x: f64 = 0.0;
    for (lines, _) in &runs {
        for l in lines {
            max_sigma_x = max_sigma_x.max(l.vx.max(0.0).sqrt());
            w.line(l)?;
        }
    }
    w.finish()?;
    let (final_sigma_x_mean, _) = mean_std(runs.iter().map(|(l, _)| l.last().map_or(0.0, |m| m.vx.max(0.0).sqrt())));

    if grid.len() <= 2048 {
        let rho = DensityState::from_pure(&runs[0].1);
        wigner_transform(&rho, model.hbar)
            .write_snapshot(&out.join("field-wigner-r0.bin"), meta(cfg, json!({"realization": 0})))?;
    }

    let action = match cfg.qct.action {
        Some(s) => s,
        None => orbit_action(&model, x0, p0, cfg.qct.orbit_periods, spp, cfg.qct.action_convention),
    };
    let window = cfg.qct.window * model.period();
    let params = StrongQctParams { action: Action::Physical(action), window, tolerance: cfg.qct.tolerance };
    let th = cfg.qct.thresholds();
    let mut report = if cfg.qct.average {
        let samples: Vec<(f64, f64)> = runs[0].0.iter().map(|l| (l.x, l.t)).collect();
        strong_qct_report_averaged(&model, &samples, &params, &th)?
    } else {
        strong_qct_report(&model, x0, p0, 0.0, &params, &th)?
    };
    report.input("max_sigma_x", max_sigma_x);
    write_json(&out.join("qct-report.json"), &json!({ "meta": meta(cfg, serde_json::Value::Null), "report": &report }))?;

    let summary = StrongQctSummary {
        k: model.k,
        hbar: model.hbar,
        ensemble_n: cfg.numerics.ensemble_n,
        periods: cfg.periods(cfg.numerics.t_total),
        steps_per_period: spp,
        max_sigma_x,
        final_sigma_x_mean,
        action,
        all_satisfied: report.all_satisfied(),
        report,
    };
    if let Some(bound) = cfg.qct.sigma_x_bound {
        if max_sigma_x > bound {
            super::output::write_summary(out, cfg, &summary)?;
            return Err(Error::Invariant(format!("max sigma_x {max_sigma_x:.4e} exceeds the bound {bound:.4e}")));
        }
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// classical oracle shared by weak-qct and the acceptance harness

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    /// Ensemble-mean exponent per unit model time.
    pub lambda_time: f64,
    /// The same per drive period.
    pub lambda_period: f64,
    pub std_period: f64,
    pub points: usize,
    pub periods: usize,
}

/// Tangent-space exponent of the noiseless flow, averaged over starting
/// points drawn around `(x0, p0)`.
pub fn oracle_lambda(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<OracleSummary> {
    let q = &cfg.qct;
    let classical = model.clone().with_k(0.0).with_diffusion(0.0);
    let period = classical.period();
    let spp = (1.0 / q.oracle_dt).round().max(1.0) as usize;
    let h = period / spp as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.numerics.base_seed);
    let spread = Normal::new(0.0, q.oracle_spread.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let points: Vec<(f64, f64)> = (0..q.oracle_points.max(1))
        .map(|_| (cfg.initial.x0 + spread.sample(&mut rng), cfg.initial.p0 + spread.sample(&mut rng)))
        .collect();
    let est = tangent_oracle_ensemble(&classical, &points, h, q.oracle_periods * spp, spp)?;
    let (mean, std) = mean_std(est.iter().map(|e| e.lambda));
    Ok(OracleSummary {
        lambda_time: mean,
        lambda_period: mean * period,
        std_period: std * period,
        points: points.len(),
        periods: q.oracle_periods,
    })
}

// ---------------------------------------------------------------------------
// weak QCT

#[derive(Debug, Clone, Serialize)]
pub struct WeakQctPoint {
    #[serde(rename = "D")]
    pub diffusion: f64,
    pub l1_slice: f64,
    pub l1_x_marginal: f64,
    pub negative_volume: f64,
    pub wigner_min: f64,
    pub wigner_max: f64,
    pub trace: f64,
    pub purity: f64,
    pub t_star: f64,
    pub t_star_periods: f64,
    pub fold_spacing: f64,
    pub no_root: bool,
    pub margin: f64,
    pub l2_over_hbar: f64,
    pub verdict: WeakQctVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakQctSummary {
    pub hbar: f64,
    pub periods: usize,
    pub area: f64,
    pub u0: f64,
    pub oracle: OracleSummary,
    pub points: Vec<WeakQctPoint>,
}

#[derive(Serialize)]
struct WeakLine {
    t: f64,
    l1_slice: f64,
    l1_x_marginal: f64,
    negative_volume: f64,
    wigner_min: f64,
    trace: f64,
    purity: f64,
    x: f64,
    p: f64,
    #[serde(rename = "Vx")]
    vx: f64,
    #[serde(rename = "Vp")]
    vp: f64,
    #[serde(rename = "Cxp")]
    cxp: f64,
}

/// Lindblad and Fokker–Planck evolution from matched Gaussian initial data
/// for each `D`, compared on the `p = 0` slice; plus smoothing times and the
/// weak-QCT margins.
pub fn run_weak_qct(cfg: &ExperimentConfig, out: &Path) -> Result<WeakQctSummary> {
    let base = cfg.model_spec()?;
    let grid = cfg.spatial_grid()?;
    let spp = cfg.steps_per_period();
    let dt = base.period() / spp as f64;
    let (every, samples) = cadence(cfg);
    let (x0, p0, sx) = (cfg.initial.x0, cfg.initial.p0, cfg.width());
    let sp = base.hbar / (2.0 * sx);
    let pure = SpatialState::coherent(grid, base.hbar, x0, p0, sx);
    let cgrid = match cfg.phase_space_grid() {
        Ok(g) => g,
        Err(_) => wigner_grid(&DensityState::from_pure(&pure), base.hbar),
    };
    if cgrid.nx() != grid.len() {
        return Err(Error::Config("classical and quantum x grids must match".into()));
    }

    let oracle = oracle_lambda(cfg, &base)?;
    let orbit_spp = (1.0 / cfg.qct.oracle_dt).round().max(1.0) as usize;
    let area = accessible_area(&base.clone().with_diffusion(0.0).with_k(0.0), x0, p0, cfg.qct.orbit_periods, orbit_spp);
    let u0 = initial_length(sx * sx, sp * sp);
    let th = cfg.qct.thresholds();

    let points = cfg
        .d_values()
        .into_par_iter()
        .map(|d| -> Result<WeakQctPoint> {
            let model = base.clone().with_diffusion(d);
            let mut lind = LindbladStep::new(grid, &model, dt)?;
            let mut fp = PhaseSpaceStep::new(cgrid, &model, dt)?;
            let mut rho = DensityState::from_pure(&pure);
            let mut f = PhaseSpaceField::gaussian(cgrid, x0, p0, sx, sp);
            f.normalize();
            let tag = label(d);
            let mut w = NdjsonWriter::create(
                &out.join(format!("trajectory-weak-D{tag}.ndjson")),
                meta(cfg, json!({"D": d, "t_unit": "model time"})),
            )?;
            let mut last = None;
            for s in 0..=samples {
                if s > 0 {
                    let steps = every.min(samples * every - (s - 1) * every);
                    lind.evolve(&mut rho, steps)?;
                    fp.evolve(&mut f, steps)?;
                }
                let wig = wigner_transform(&rho, model.hbar);
                let l1_slice = relative_l1(&wig.slice_at_p(0.0), &f.slice_at_p(0.0));
                let l1_x_marginal = relative_l1(&rho.diagonal(), &f.x_marginal());
                let m = rho.moments(model.hbar);
                let line = WeakLine {
                    t: rho.t(),
                    l1_slice,
                    l1_x_marginal,
                    negative_volume: wig.negative_volume(),
                    wigner_min: wig.min(),
                    trace: rho.trace(),
                    purity: rho.purity(),
                    x: m.x,
                    p: m.p,
                    vx: m.vx,
                    vp: m.vp,
                    cxp: m.cxp,
                };
                w.line(&line)?;
                let period = rho.t() / model.period();
                if snapshot_due(cfg, period, s == samples) {
                    let pt = format!("{:.0}", period);
                    let extra = meta(cfg, json!({"D": d, "field": "wigner"}));
                    wig.write_snapshot(&out.join(format!("field-wigner-D{tag}-t{pt}.bin")), extra)?;
                    let extra = meta(cfg, json!({"D": d, "field": "classical"}));
                    f.write_snapshot(&out.join(format!("field-classical-D{tag}-t{pt}.bin")), extra)?;
                }
                last = Some((line, wig.max()));
            }
            w.finish()?;
            let (line, wigner_max) = last.expect("at least one sample");
            let ts = compute_t_star(oracle.lambda_time, d, model.mass, area, u0)?;
            let entry = check_weak_qct(d, ts.t_star, oracle.lambda_time, model.mass, model.hbar, &th);
            let l2_over_hbar = entry.extra.iter().find(|(k, _)| k == "l2_over_hbar").map_or(f64::NAN, |e| e.1);
            Ok(WeakQctPoint {
                diffusion: d,
                l1_slice: line.l1_slice,
                l1_x_marginal: line.l1_x_marginal,
                negative_volume: line.negative_volume,
                wigner_min: line.wigner_min,
                wigner_max,
                trace: line.trace,
                purity: line.purity,
                t_star: ts.t_star,
                t_star_periods: ts.t_star / model.period(),
                fold_spacing: ts.fold_spacing,
                no_root: ts.no_root,
                margin: entry.margin,
                l2_over_hbar,
                verdict: weak_qct_verdict(entry.margin, &th),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = QctReport::new(Evaluation::None, th);
    for p in &points {
        let ts = compute_t_star(oracle.lambda_time, p.diffusion, base.mass, area, u0)?;
        let mut e = check_weak_qct(p.diffusion, ts.t_star, oracle.lambda_time, base.mass, base.hbar, &th);
        e.name = format!("weak qct (D = {:e})", p.diffusion);
        report.push(e);
    }
    report.input("lambda", oracle.lambda_time);
    report.input("A", area);
    report.input("u0", u0);
    write_json(&out.join("qct-report.json"), &json!({ "meta": meta(cfg, serde_json::Value::Null), "report": report }))?;

    Ok(WeakQctSummary { hbar: base.hbar, periods: cfg.periods(cfg.numerics.t_total), area, u0, oracle, points })
}

// ---------------------------------------------------------------------------
// generic dispatch over the tracked dynamics

/// Callback receiving a system factory and its initial state.
trait SystemVisitor {
    type Out;
    fn visit<S, F>(self, make: F, initial: S::State) -> Result<Self::Out>
    where
        S: DivergenceSystem,
        S::State: Send + Sync,
        F: Fn() -> Result<S> + Sync;
}

fn dispatch<V: SystemVisitor>(cfg: &ExperimentConfig, kind: SystemKind, model: &ModelSpec, v: V) -> Result<V::Out> {
    let dt = model.period() / cfg.steps_per_period() as f64;
    let (x0, p0, sx) = (cfg.initial.x0, cfg.initial.p0, cfg.width());
    match kind {
        SystemKind::Quantum => {
            let grid = cfg.spatial_grid()?;
            v.visit(|| QuantumSystem::new(grid, model, dt), SpatialState::coherent(grid, model.hbar, x0, p0, sx))
        }
        SystemKind::Cumulant => {
            let opts = CumulantOptions { quantum: model.hbar > 0.0, ..Default::default() };
            v.visit(|| Ok(CumulantSystem::new(model, dt, opts)), CumulantState::coherent(x0, p0, sx, model.hbar))
        }
        SystemKind::Langevin => v.visit(|| Ok(LangevinSystem::new(model, dt)), LangevinState::new(x0, p0)),
        SystemKind::Newton => v.visit(|| Ok(NewtonSystem::new(model, dt)), LangevinState::new(x0, p0)),
    }
}

fn divergence_params(cfg: &ExperimentConfig, delta0: f64) -> DivergenceParams {
    let spp = cfg.steps_per_period();
    let interval_steps = ((cfg.numerics.tau_r * spp as f64).round() as usize).max(1);
    let total = cfg.periods(cfg.numerics.t_total) * spp;
    DivergenceParams {
        delta0,
        angle: cfg.lyapunov.angle,
        interval_steps,
        intervals: (total / interval_steps).max(1),
        renormalization: cfg.lyapunov.renormalization,
        scales: (cfg.lyapunov.scales[0], cfg.lyapunov.scales[1]),
    }
}

// ---------------------------------------------------------------------------
// Lyapunov sweep

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovPoint {
    pub k: f64,
    pub hbar: f64,
    /// Exponent per drive period.
    pub lambda_mean: f64,
    pub lambda_std: f64,
    pub lambda_stderr: f64,
    pub n: usize,
    #[serde(rename = "T_total")]
    pub t_total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSweepSummary {
    pub system: SystemKind,
    pub points: Vec<LyapunovPoint>,
}

struct Fixed<'a> {
    base_seed: u64,
    ensemble_n: usize,
    params: &'a DivergenceParams,
}

impl SystemVisitor for Fixed<'_> {
    type Out = LyapunovEstimate;
    fn visit<S, F>(self, make: F, initial: S::State) -> Result<LyapunovEstimate>
    where
        S: DivergenceSystem,
        S::State: Send + Sync,
        F: Fn() -> Result<S> + Sync,
    {
        lyapunov_fixed_noise(make, &initial, self.base_seed, self.ensemble_n, self.params)
    }
}

#[derive(Serialize)]
struct LyapunovLine {
    realization: u64,
    t: f64,
    lambda_s: f64,
    delta: f64,
    delta_x: f64,
    x: f64,
    p: f64,
}

fn write_curves(path: &Path, cfg: &ExperimentConfig, est: &LyapunovEstimate, period: f64, extra: serde_json::Value) -> Result<()> {
    let mut w = NdjsonWriter::create(path, meta(cfg, extra))?;
    for c in &est.curves {
        for j in 0..c.times.len() {
            w.line(&LyapunovLine {
                realization: c.realization,
                t: c.times[j] / period,
                lambda_s: c.lambda[j] * period,
                delta: c.delta[j],
                delta_x: c.delta_x[j],
                x: c.fiducial[j].0,
                p: c.fiducial[j].1,
            })?;
        }
    }
    w.finish()
}

/// Fixed-noise exponents for each configured `k`.
pub fn run_lyapunov_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<LyapunovSweepSummary> {
    let base = cfg.model_spec()?;
    let params = divergence_params(cfg, cfg.delta0());
    let n = cfg.numerics.ensemble_n;
    let mut points = Vec::new();
    for k in cfg.k_values() {
        let model = base.clone().with_k(k);
        model.validate().map_err(|e| Error::Config(e.to_string()))?;
        let period = model.period();
        let est = dispatch(cfg, cfg.lyapunov.system, &model, Fixed { base_seed: cfg.numerics.base_seed, ensemble_n: n, params: &params })?;
        let extra = json!({"k": k, "t_unit": "drive periods", "lambda_unit": "per drive period"});
        write_curves(&out.join(format!("trajectory-lyapunov-k{}.ndjson", label(k))), cfg, &est, period, extra)?;
        points.push(LyapunovPoint {
            k,
            hbar: model.hbar,
            lambda_mean: est.mean * period,
            lambda_std: est.std * period,
            lambda_stderr: est.std * period / (n as f64).sqrt(),
            n,
            t_total: cfg.numerics.t_total,
        });
        log::info!("k = {k:e}: lambda = {:.4} ± {:.4} per period", est.mean * period, est.std * period);
    }
    Ok(LyapunovSweepSummary { system: cfg.lyapunov.system, points })
}

// ---------------------------------------------------------------------------
// stroboscopic map

#[derive(Debug, Clone, Serialize)]
pub struct StrobePoint {
    pub k: f64,
    pub n_points: usize,
    pub rms_radius: f64,
    pub reference_rms_radius: f64,
    pub radius_ratio: f64,
    pub ks_d: f64,
    pub ks_p: f64,
    pub bandwidth: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct StrobeSummary {
    pub system: SystemKind,
    pub levels: Vec<f64>,
    pub reference_center: (f64, f64),
    pub points: Vec<StrobePoint>,
}

struct Strobe {
    base_seed: u64,
    ensemble_n: usize,
    periods: usize,
    spp: usize,
}

impl SystemVisitor for Strobe {
    type Out = Vec<Vec<(f64, f64)>>;
    fn visit<S, F>(self, make: F, initial: S::State) -> Result<Self::Out>
    where
        S: DivergenceSystem,
        S::State: Send + Sync,
        F: Fn() -> Result<S> + Sync,
    {
        (0..self.ensemble_n as u64)
            .into_par_iter()
            .map(|i| {
                let mut sys = make()?;
                let mut noise = NoisePath::for_realization(self.base_seed, i, sys.dt())?;
                let mut state = initial.clone();
                let mut dws = vec![0.0; self.spp];
                let mut pts = Vec::with_capacity(self.periods);
                for _ in 0..self.periods {
                    dws.iter_mut().for_each(|d| *d = noise.next_dw());
                    sys.advance(&mut state, &dws)?;
                    pts.push(sys.centroid(&state));
                }
                Ok(pts)
            })
            .collect()
    }
}

/// Noiseless classical map from `(x0, p0)`, one point per period.
pub fn classical_strobe(model: &ModelSpec, x0: f64, p0: f64, periods: usize, spp: usize) -> Vec<(f64, f64)> {
    let h = model.period() / spp as f64;
    let (mut x, mut p) = (x0, p0);
    let mut out = Vec::with_capacity(periods);
    for n in 0..periods {
        for s in 0..spp {
            (x, p) = rk4_step(model, x, p, (n * spp + s) as f64 * h, h);
        }
        out.push((x, p));
    }
    out
}

fn radii(points: &[(f64, f64)], c: (f64, f64)) -> Vec<f64> {
    points.iter().map(|q| (q.0 - c.0).hypot(q.1 - c.1)).collect()
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|r| r * r).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

/// Centroid sampled once per drive period for each `k`, compared with the
/// noiseless classical map; writes `strobe.csv` and kernel-density fields.
pub fn run_strobe_map(cfg: &ExperimentConfig, out: &Path) -> Result<StrobeSummary> {
    let base = cfg.model_spec()?;
    let spp = cfg.steps_per_period();
    let periods = cfg.periods(cfg.numerics.t_total);
    let classical = base.clone().with_k(0.0).with_diffusion(0.0);
    let reference = classical_strobe(&classical, cfg.initial.x0, cfg.initial.p0, cfg.strobe.reference_periods, spp);
    let n_ref = reference.len() as f64;
    let center = (reference.iter().map(|q| q.0).sum::<f64>() / n_ref, reference.iter().map(|q| q.1).sum::<f64>() / n_ref);
    let ref_r = radii(&reference, center);

    let mut csv = String::new();
    csv.push_str(&format!("# {}\n", serde_json::to_string(&meta(cfg, json!({"t_unit": "drive periods"})))?));
    csv.push_str("source,k,realization,period,x,p\n");
    for (n, q) in reference.iter().enumerate() {
        csv.push_str(&format!("reference,0,0,{},{:.10e},{:.10e}\n", n + 1, q.0, q.1));
    }

    let mut points = Vec::new();
    for k in cfg.k_values() {
        let model = base.clone().with_k(k);
        let runs = dispatch(
            cfg,
            cfg.strobe.system,
            &model,
            Strobe { base_seed: cfg.numerics.base_seed, ensemble_n: cfg.numerics.ensemble_n, periods, spp },
        )?;
        for (i, pts) in runs.iter().enumerate() {
            for (n, q) in pts.iter().enumerate() {
                csv.push_str(&format!("map,{k:e},{i},{},{:.10e},{:.10e}\n", n + 1, q.0, q.1));
            }
        }
        let all: Vec<(f64, f64)> = runs.into_iter().flatten().collect();
        let r = radii(&all, center);
        let (ks_d, ks_p) = ks_two_sample(&r, &ref_r);
        let bandwidth = match cfg.strobe.bandwidth {
            Some([hx, hp]) => (hx, hp),
            None => scott_bandwidth(&all),
        };
        let field = density_field(&all, &reference, cfg.strobe.density_n, bandwidth)?;
        let extra = meta(cfg, json!({"k": k, "levels": cfg.strobe.levels, "bandwidth": bandwidth}));
        field.write_snapshot(&out.join(format!("field-strobe-k{}.bin", label(k))), extra)?;
        points.push(StrobePoint {
            k,
            n_points: all.len(),
            rms_radius: rms(&r),
            reference_rms_radius: rms(&ref_r),
            radius_ratio: rms(&r) / rms(&ref_r),
            ks_d,
            ks_p,
            bandwidth,
        });
    }
    std::fs::write(out.join("strobe.csv"), csv)?;
    Ok(StrobeSummary { system: cfg.strobe.system, levels: cfg.strobe.levels.clone(), reference_center: center, points })
}

/// Kernel density on a grid bounding both the map and the reference, with
/// a margin of three bandwidths.
fn density_field(points: &[(f64, f64)], reference: &[(f64, f64)], n: usize, bw: (f64, f64)) -> Result<PhaseSpaceField> {
    let all = points.iter().chain(reference);
    let (mut xl, mut xh, mut pl, mut ph) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for q in all {
        xl = xl.min(q.0);
        xh = xh.max(q.0);
        pl = pl.min(q.1);
        ph = ph.max(q.1);
    }
    let grid = PhaseSpaceGrid::new(SpatialGrid::new(xl - 3.0 * bw.0, xh + 3.0 * bw.0, n)?, pl - 3.0 * bw.1, ph + 3.0 * bw.1, n)?;
    let xs = grid.x_grid().positions();
    let ps = grid.momenta();
    PhaseSpaceField::new(grid, kde_grid(points, &xs, &ps, bw), 0.0)
}

// ---------------------------------------------------------------------------
// isolated decay

#[derive(Debug, Clone, Serialize)]
pub struct IsolatedDecaySummary {
    pub hbar: f64,
    pub ensemble_n: usize,
    pub fit_window: [f64; 2],
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub fit_points: usize,
    pub final_lambda_mean: f64,
    pub final_lambda_std: f64,
}

struct Angles<'a> {
    base_seed: u64,
    ensemble_n: usize,
    params: &'a DivergenceParams,
}

impl SystemVisitor for Angles<'_> {
    type Out = LyapunovEstimate;
    fn visit<S, F>(self, make: F, initial: S::State) -> Result<LyapunovEstimate>
    where
        S: DivergenceSystem,
        S::State: Send + Sync,
        F: Fn() -> Result<S> + Sync,
    {
        let n = self.ensemble_n;
        let curves = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut sys = make()?;
                let mut noise = NoisePath::for_realization(self.base_seed, i, sys.dt())?;
                let params = DivergenceParams {
                    angle: self.params.angle + std::f64::consts::PI * i as f64 / n as f64,
                    ..*self.params
                };
                divergence_run(&mut sys, &initial, &mut noise, &params)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LyapunovEstimate::from_curves(curves))
    }
}

/// Finite-time exponent of the unobserved (`k = 0`) evolution and its
/// log–log slope. The evolution is deterministic, so the ensemble runs over
/// offset directions spread across a half turn.
pub fn run_isolated_decay(cfg: &ExperimentConfig, out: &Path) -> Result<IsolatedDecaySummary> {
    let model = cfg.model_spec()?;
    let period = model.period();
    let params = divergence_params(cfg, cfg.delta0());
    let n = cfg.numerics.ensemble_n;
    let est = dispatch(cfg, cfg.lyapunov.system, &model, Angles { base_seed: cfg.numerics.base_seed, ensemble_n: n, params: &params })?;
    let extra = json!({"t_unit": "drive periods", "lambda_unit": "per drive period"});
    write_curves(&out.join("trajectory-isolated-decay.ndjson"), cfg, &est, period, extra)?;

    let [lo, hi] = cfg.lyapunov.fit_window;
    let times: Vec<f64> = est.times.iter().map(|t| t / period).collect();
    let lam: Vec<f64> = est.mean_curve.iter().map(|l| l * period).collect();
    let (xs, ys) = log_spaced(&times, &lam, lo, hi, 40);
    let fit = loglog_slope(&xs, &ys);
    let (m, s) = mean_std(est.finals.iter().map(|l| l * period));
    Ok(IsolatedDecaySummary {
        hbar: model.hbar,
        ensemble_n: n,
        fit_window: cfg.lyapunov.fit_window,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        fit_points: xs.len(),
        final_lambda_mean: m,
        final_lambda_std: s,
    })
}

/// Up to `count` samples of `(t, y)` within `[lo, hi]`, nearest to
/// log-uniform times, so late times do not dominate a log–log fit.
pub fn log_spaced(t: &[f64], y: &[f64], lo: f64, hi: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= lo * (1.0 - 1e-9) && t[i] <= hi * (1.0 + 1e-9)).collect();
    if idx.len() <= count {
        return (idx.iter().map(|&i| t[i]).collect(), idx.iter().map(|&i| y[i]).collect());
    }
    let (a, b) = (t[idx[0]].ln(), t[*idx.last().unwrap()].ln());
    let mut chosen: Vec<usize> = (0..count)
        .map(|j| {
            let target = a + (b - a) * j as f64 / (count - 1) as f64;
            *idx.iter().min_by(|&&u, &&v| (t[u].ln() - target).abs().total_cmp(&(t[v].ln() - target).abs())).unwrap()
        })
        .collect();
    chosen.dedup();
    (chosen.iter().map(|&i| t[i]).collect(), chosen.iter().map(|&i| y[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spacing_favours_early_times() {
        let t: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let (xs, _) = log_spaced(&t, &t, 10.0, 500.0, 20);
        assert_eq!(xs[0], 10.0);
        assert_eq!(*xs.last().unwrap(), 500.0);
        assert!(xs.iter().filter(|&&x| x < 50.0).count() >= 8);
    }

    #[test]
    fn undriven_strobe_stays_on_energy_contour() {
        let m = crate::model::duffing_spec().with_potential(crate::model::duffing_spec().potential.undriven());
        let pts = classical_strobe(&m, 2.0, 0.0, 50, 1000);
        let e0 = m.energy(2.0, 0.0, 0.0);
        for q in pts {
            assert!((m.energy(q.0, q.1, 0.0) - e0).abs() < 1e-6 * e0.abs());
        }
    }
}
