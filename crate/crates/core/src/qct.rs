//! Quantum–classical transition criteria as explicit pass/fail checks with
//! margins.
//!
//! Every check returns a [`QctEntry`] carrying both sides of the inequality
//! and their ratio. "≫" is read as `ratio >= much_greater` (default 10), "≳"
//! as `ratio >= at_least` (default 1); both thresholds are echoed into every
//! report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classical::newton::{orbit_bounds, rk4_step};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Ratio that operationalizes "≫".
    pub much_greater: f64,
    /// Ratio that operationalizes "≳".
    pub at_least: f64,
    /// `|F|` below which force-normalized criteria are undefined.
    pub singular_force: f64,
    /// Weak-QCT margin below which the condition counts as strongly violated.
    pub strong_violation: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { much_greater: 10.0, at_least: 1.0, singular_force: 1e-8, strong_violation: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs ≫ rhs`
    MuchGreater,
    /// `lhs ≳ rhs`
    AtLeast,
    /// `lhs > rhs`
    Greater,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::MuchGreater => ">>",
            Relation::AtLeast => ">~",
            Relation::Greater => ">",
        }
    }
}

/// One inequality `lhs REL rhs`, with `margin = lhs / rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QctEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub satisfied: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<(String, f64)>,
}

impl QctEntry {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, relation: Relation, th: &Thresholds) -> Self {
        let margin = if rhs == 0.0 { f64::INFINITY } else { lhs / rhs };
        let threshold = match relation {
            Relation::MuchGreater => th.much_greater,
            Relation::AtLeast => th.at_least,
            Relation::Greater => 1.0,
        };
        let satisfied = match relation {
            Relation::Greater => margin > threshold,
            _ => margin >= threshold,
        };
        Self { name: name.into(), lhs, rhs, margin, relation, threshold, satisfied, extra: Vec::new() }
    }

    fn with_extra(mut self, key: &str, v: f64) -> Self {
        self.extra.push((key.to_string(), v));
        self
    }
}

/// Where the force-dependent criteria were evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Evaluation {
    Point { x: f64, p: f64, t: f64 },
    /// Right-hand sides averaged over sampled orbit points; singular points
    /// are skipped and counted.
    PhaseSpaceAverage { samples: usize, skipped: usize },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QctReport {
    pub evaluation: Evaluation,
    pub thresholds: Thresholds,
    pub entries: Vec<QctEntry>,
    /// Labeled inputs echoed for auditability (A, u0, action convention, …).
    pub inputs: Vec<(String, serde_json::Value)>,
}

impl QctReport {
    pub fn new(evaluation: Evaluation, thresholds: Thresholds) -> Self {
        Self { evaluation, thresholds, entries: Vec::new(), inputs: Vec::new() }
    }

    pub fn push(&mut self, e: QctEntry) {
        self.entries.push(e);
    }

    pub fn input(&mut self, key: &str, v: impl Into<serde_json::Value>) {
        self.inputs.push((key.to_string(), v.into()));
    }

    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table, one row per criterion.
    pub fn to_table(&self) -> String {
        let w = self.entries.iter().map(|e| e.name.len()).max().unwrap_or(4).max(9);
        let mut s = String::new();
        let _ = writeln!(s, "{:<w$}  {:>12} {:>3} {:>12}  {:>12}  {:>9}  verdict", "criterion", "lhs", "", "rhs", "margin", "threshold");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<w$}  {:>12.4e} {:>3} {:>12.4e}  {:>12.4e}  {:>9.3}  {}",
                e.name,
                e.lhs,
                e.relation.symbol(),
                e.rhs,
                e.margin,
                e.threshold,
                if e.satisfied { "ok" } else { "VIOLATED" }
            );
        }
        s
    }
}

/// Point-mass localization under continuous observation: `8k` against the
/// classical (weak nonlinearity) or quantum (strong nonlinearity) bound.
pub fn check_localization(model: &ModelSpec, x: f64, t: f64, quantum: bool, th: &Thresholds) -> Result<QctEntry> {
    let rhs = localization_rhs(model, x, t, quantum, th)?;
    let name = if quantum { "localization (quantum)" } else { "localization (classical)" };
    Ok(QctEntry::new(name, 8.0 * model.k, rhs, Relation::MuchGreater, th))
}

fn localization_rhs(model: &ModelSpec, x: f64, t: f64, quantum: bool, th: &Thresholds) -> Result<f64> {
    let fd = model.potential.force_and_derivatives(x, t);
    if fd.force.abs() < th.singular_force {
        return Err(Error::SingularPoint { x, force: fd.force });
    }
    let (f2, c2, m) = (fd.force * fd.force, fd.curvature * fd.curvature, model.mass);
    Ok(if quantum {
        c2 * model.hbar / (4.0 * m * f2)
    } else {
        (c2 * fd.gradient.abs() / (2.0 * m * f2)).sqrt()
    })
}

/// `ħ` at which the classical and quantum localization bounds coincide.
/// Above it the quantum form is the binding one.
pub fn localization_crossover_hbar(model: &ModelSpec, x: f64, t: f64, th: &Thresholds) -> Result<f64> {
    let classical = localization_rhs(model, x, t, false, th)?;
    let per_hbar = localization_rhs(&model.clone().with_hbar(1.0), x, t, true, th)?;
    Ok(if per_hbar == 0.0 { f64::INFINITY } else { classical / per_hbar })
}

/// Orbit action entering the low-noise criteria. The physical action is
/// `S = s ħ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Physical action `S`.
    Physical(f64),
    /// Action in units of `ħ`.
    Dimensionless(f64),
}

impl Action {
    pub fn physical(self, hbar: f64) -> f64 {
        match self {
            Action::Physical(s) => s,
            Action::Dimensionless(s) => s * hbar,
        }
    }

    pub fn dimensionless(self, hbar: f64) -> f64 {
        match self {
            Action::Physical(s) => s / hbar,
            Action::Dimensionless(s) => s,
        }
    }
}

/// Low-noise conditions. Classical mode yields `k ≫ 2|∂F|/S`; quantum mode
/// yields the double-sided window `2|∂F|/s ≪ ħk ≪ |∂F|s/4` as two entries.
pub fn check_low_noise(
    model: &ModelSpec,
    x: f64,
    t: f64,
    action: Action,
    quantum: bool,
    th: &Thresholds,
) -> Result<Vec<QctEntry>> {
    let g = model.potential.force_and_derivatives(x, t).gradient.abs();
    if g < th.singular_force {
        return Err(Error::SingularPoint { x, force: g });
    }
    low_noise_entries(model, g, action, quantum, th)
}

fn low_noise_entries(model: &ModelSpec, g: f64, action: Action, quantum: bool, th: &Thresholds) -> Result<Vec<QctEntry>> {
    if quantum {
        if model.hbar <= 0.0 {
            return Err(Error::InvalidParameter("quantum low-noise check needs hbar > 0".into()));
        }
        let s = action.dimensionless(model.hbar);
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!("action must be > 0, got {s}")));
        }
        let hk = model.hbar * model.k;
        Ok(vec![
            QctEntry::new("low noise (quantum, lower)", hk, 2.0 * g / s, Relation::MuchGreater, th).with_extra("s", s),
            QctEntry::new("low noise (quantum, upper)", g * s / 4.0, hk, Relation::MuchGreater, th).with_extra("s", s),
        ])
    } else {
        let s = action.physical(model.hbar);
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!("action must be > 0, got {s}")));
        }
        Ok(vec![QctEntry::new("low noise (classical)", model.k, 2.0 * g / s, Relation::MuchGreater, th).with_extra("S", s)])
    }
}

/// The averaged record over `window` resolves the estimate to `tolerance`:
/// `8k > 1/(Δt Δx²)`, margin `8k Δt Δx²`.
pub fn check_record_fidelity(k: f64, window: f64, tolerance: f64, th: &Thresholds) -> Result<QctEntry> {
    if !(window > 0.0 && tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("window {window} and tolerance {tolerance} must be > 0")));
    }
    Ok(QctEntry::new("record fidelity", 8.0 * k, 1.0 / (window * tolerance * tolerance), Relation::Greater, th))
}

/// Smoothing time and the fold spacing reached there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TStar {
    pub t_star: f64,
    pub fold_spacing: f64,
    /// Set when the diffusive scale already exceeds the fold spacing at
    /// `t = 0`; `t_star` is then zero.
    pub no_root: bool,
}

/// Solves `(A/u0) e^{-λt} = √(D t / (m λ))` for `t` by bracketing and
/// bisection.
pub fn compute_t_star(lambda: f64, d: f64, m: f64, area: f64, u0: f64) -> Result<TStar> {
    for (name, v) in [("lambda", lambda), ("D", d), ("m", m), ("A", area), ("u0", u0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
        }
    }
    let fold = |t: f64| area / u0 * (-lambda * t).exp();
    let diff = |t: f64| (d * t / (m * lambda)).sqrt();
    let g = |t: f64| fold(t) - diff(t);
    if g(0.0) <= 0.0 {
        return Ok(TStar { t_star: 0.0, fold_spacing: fold(0.0), no_root: true });
    }
    let mut hi = 1.0 / lambda;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(TStar { t_star: t, fold_spacing: fold(t), no_root: false })
}

/// Weak-QCT threshold `D t* ≳ λ m ħ`; also reports `l(t*)²/ħ`.
pub fn check_weak_qct(d: f64, t_star: f64, lambda: f64, m: f64, hbar: f64, th: &Thresholds) -> QctEntry {
    let l2 = d * t_star / (m * lambda);
    QctEntry::new("weak qct", d * t_star, lambda * m * hbar, Relation::AtLeast, th).with_extra("l2_over_hbar", l2 / hbar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakQctVerdict {
    StronglyViolated,
    MildlyViolated,
    Satisfied,
}

pub fn weak_qct_verdict(margin: f64, th: &Thresholds) -> WeakQctVerdict {
    if margin < th.strong_violation {
        WeakQctVerdict::StronglyViolated
    } else if margin < th.at_least {
        WeakQctVerdict::MildlyViolated
    } else {
        WeakQctVerdict::Satisfied
    }
}

/// Default bounding area: `(x-extent)·(p-extent)` of the noiseless orbit.
pub fn accessible_area(model: &ModelSpec, x0: f64, p0: f64, periods: usize, steps_per_period: usize) -> f64 {
    let (x_lo, x_hi, p_lo, p_hi) = orbit_bounds(model, x0, p0, periods, steps_per_period);
    (x_hi - x_lo) * (p_hi - p_lo)
}

/// Default initial length `√(2π √(Cxx Cpp))`.
pub fn initial_length(cxx: f64, cpp: f64) -> f64 {
    (2.0 * std::f64::consts::PI * (cxx * cpp).sqrt()).sqrt()
}

/// How the orbit action `S` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActionConvention {
    /// `∫ p dq` over one drive period, averaged over periods.
    #[default]
    LoopIntegral,
    /// Mean energy above the potential minimum times the drive period.
    EnergyPeriod,
}

/// Orbit action of the noiseless trajectory from `(x0, p0)`.
pub fn orbit_action(
    model: &ModelSpec,
    x0: f64,
    p0: f64,
    periods: usize,
    steps_per_period: usize,
    convention: ActionConvention,
) -> f64 {
    let period = model.period();
    let h = period / steps_per_period as f64;
    let (mut x, mut p) = (x0, p0);
    let n = periods * steps_per_period;
    let mut acc = 0.0;
    match convention {
        ActionConvention::LoopIntegral => {
            for s in 0..n {
                let (x1, p1) = rk4_step(model, x, p, s as f64 * h, h);
                acc += 0.5 * (p + p1) * (x1 - x);
                (x, p) = (x1, p1);
            }
            acc / periods as f64
        }
        ActionConvention::EnergyPeriod => {
            let v_min = potential_minimum(model);
            for s in 0..n {
                (x, p) = rk4_step(model, x, p, s as f64 * h, h);
                acc += model.energy(x, p, (s + 1) as f64 * h) - v_min;
            }
            acc / n as f64 * period
        }
    }
}

fn potential_minimum(model: &ModelSpec) -> f64 {
    // coarse scan plus local refinement is ample for low-degree polynomials
    let v = |x: f64| model.potential.static_value(x);
    let (mut best, mut bx) = (f64::INFINITY, 0.0);
    for i in 0..=4000 {
        let x = -20.0 + 40.0 * i as f64 / 4000.0;
        if v(x) < best {
            best = v(x);
            bx = x;
        }
    }
    let (mut lo, mut hi) = (bx - 0.01, bx + 0.01);
    for _ in 0..100 {
        let (a, b) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if v(a) < v(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    v(0.5 * (lo + hi)).min(best)
}

/// Inputs of the strong-QCT report beyond the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongQctParams {
    pub action: Action,
    /// Record averaging window `Δt`.
    pub window: f64,
    /// Required position resolution `Δx`.
    pub tolerance: f64,
}

/// Full strong-QCT report at one phase-space point: both localization forms,
/// both low-noise forms and record fidelity.
pub fn strong_qct_report(model: &ModelSpec, x: f64, p: f64, t: f64, params: &StrongQctParams, th: &Thresholds) -> Result<QctReport> {
    let mut r = QctReport::new(Evaluation::Point { x, p, t }, *th);
    r.push(check_localization(model, x, t, false, th)?);
    if model.hbar > 0.0 {
        r.push(check_localization(model, x, t, true, th)?);
    }
    r.entries.extend(check_low_noise(model, x, t, params.action, false, th)?);
    if model.hbar > 0.0 {
        r.entries.extend(check_low_noise(model, x, t, params.action, true, th)?);
    }
    r.push(check_record_fidelity(model.k, params.window, params.tolerance, th)?);
    echo_params(&mut r, model, params);
    Ok(r)
}

/// Strong-QCT report with right-hand sides averaged over orbit samples
/// `(x, t)`.
pub fn strong_qct_report_averaged(model: &ModelSpec, samples: &[(f64, f64)], params: &StrongQctParams, th: &Thresholds) -> Result<QctReport> {
    let (mut loc_c, mut loc_q, mut grad, mut used) = (0.0, 0.0, 0.0, 0usize);
    for &(x, t) in samples {
        let (Ok(c), Ok(q)) = (localization_rhs(model, x, t, false, th), localization_rhs(model, x, t, true, th)) else {
            continue;
        };
        loc_c += c;
        loc_q += q;
        grad += model.potential.force_and_derivatives(x, t).gradient.abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidParameter("no non-singular samples to average over".into()));
    }
    let n = used as f64;
    let mut r = QctReport::new(Evaluation::PhaseSpaceAverage { samples: samples.len(), skipped: samples.len() - used }, *th);
    r.push(QctEntry::new("localization (classical)", 8.0 * model.k, loc_c / n, Relation::MuchGreater, th));
    if model.hbar > 0.0 {
        r.push(QctEntry::new("localization (quantum)", 8.0 * model.k, loc_q / n, Relation::MuchGreater, th));
    }
    r.entries.extend(low_noise_entries(model, grad / n, params.action, false, th)?);
    if model.hbar > 0.0 {
        r.entries.extend(low_noise_entries(model, grad / n, params.action, true, th)?);
    }
    r.push(check_record_fidelity(model.k, params.window, params.tolerance, th)?);
    echo_params(&mut r, model, params);
    Ok(r)
}

fn echo_params(r: &mut QctReport, model: &ModelSpec, params: &StrongQctParams) {
    r.input("hbar", model.hbar);
    r.input("k", model.k);
    r.input("mass", model.mass);
    r.input("S", params.action.physical(model.hbar));
    r.input("window", params.window);
    r.input("tolerance", params.tolerance);
}
