//! Deterministic Newtonian flow and its tangent (variational) system,
//! integrated with classical fourth-order Runge–Kutta.

use crate::model::ModelSpec;

/// Phase point with an attached tangent vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentState {
    pub x: f64,
    pub p: f64,
    pub dx: f64,
    pub dp: f64,
}

fn rhs(model: &ModelSpec, s: &TangentState, t: f64) -> TangentState {
    let fd = model.potential.force_and_derivatives(s.x, t);
    TangentState {
        x: s.p / model.mass,
        p: fd.force,
        dx: s.dp / model.mass,
        dp: fd.gradient * s.dx,
    }
}

fn axpy(a: &TangentState, h: f64, b: &TangentState) -> TangentState {
    TangentState { x: a.x + h * b.x, p: a.p + h * b.p, dx: a.dx + h * b.dx, dp: a.dp + h * b.dp }
}

/// One RK4 step of Newton's equations together with their linearization.
pub fn rk4_tangent_step(model: &ModelSpec, s: &TangentState, t: f64, h: f64) -> TangentState {
    let k1 = rhs(model, s, t);
    let k2 = rhs(model, &axpy(s, 0.5 * h, &k1), t + 0.5 * h);
    let k3 = rhs(model, &axpy(s, 0.5 * h, &k2), t + 0.5 * h);
    let k4 = rhs(model, &axpy(s, h, &k3), t + h);
    TangentState {
        x: s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        p: s.p + h / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
        dx: s.dx + h / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        dp: s.dp + h / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp),
    }
}

/// One RK4 step of Newton's equations alone.
pub fn rk4_step(model: &ModelSpec, x: f64, p: f64, t: f64, h: f64) -> (f64, f64) {
    let s = rk4_tangent_step(model, &TangentState { x, p, dx: 0.0, dp: 0.0 }, t, h);
    (s.x, s.p)
}

/// Bounding box `(x_min, x_max, p_min, p_max)` of the noiseless orbit from
/// `(x0, p0)` over `periods` drive periods.
pub fn orbit_bounds(model: &ModelSpec, x0: f64, p0: f64, periods: usize, steps_per_period: usize) -> (f64, f64, f64, f64) {
    let h = model.period() / steps_per_period as f64;
    let (mut x, mut p) = (x0, p0);
    let mut b = (x0, x0, p0, p0);
    for s in 0..periods * steps_per_period {
        (x, p) = rk4_step(model, x, p, s as f64 * h, h);
        b = (b.0.min(x), b.1.max(x), b.2.min(p), b.3.max(p));
    }
    b
}
