//! Grids, potentials and the physical configuration shared by every engine.
//!
//! Potentials are polynomials of degree at most six plus a single sinusoidal
//! drive, `V(x,t) = sum_j c_j x^j + amp * x * cos(omega * t)`. Every derivative is
//! evaluated exactly, so the quantum correction series of the Wigner-Moyal
//! bracket terminates at the polynomial degree.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported polynomial degree of the static potential.
pub const MAX_DEGREE: usize = 6;

/// Uniform position grid with `n` samples `x_i = x_min + i * dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "sample count must be a power of two >= 16, got {n}"
            )));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn extent(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Spacing of the conjugate momentum grid, `2 pi hbar / (n dx)`.
    pub fn dp(&self, hbar: f64) -> f64 {
        2.0 * PI * hbar / (self.n as f64 * self.dx())
    }

    /// Nyquist momentum `pi hbar / dx`; the conjugate grid spans `[-p_max, p_max)`.
    pub fn p_max(&self, hbar: f64) -> f64 {
        PI * hbar / self.dx()
    }

    /// Conjugate momenta in discrete Fourier transform order
    /// (`0, dp, ..., -p_max, ..., -dp`).
    pub fn momenta(&self, hbar: f64) -> Vec<f64> {
        fft_frequencies(self.n, self.dp(hbar))
    }

    /// Index of the grid point closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.dx()).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// Frequencies `j * spacing` in FFT order for a transform of length `n`.
pub(crate) fn fft_frequencies(n: usize, spacing: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let j = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            j * spacing
        })
        .collect()
}

/// Phase-space grid: a position grid paired with an independent momentum axis
/// `p_j = p_min + j * dp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    x: SpatialGrid,
    p_min: f64,
    p_max: f64,
    n_p: usize,
}

impl PhaseSpaceGrid {
    pub fn new(x: SpatialGrid, p_min: f64, p_max: f64, n_p: usize) -> Result<Self> {
        if !p_min.is_finite() || !p_max.is_finite() || p_max <= p_min {
            return Err(Error::InvalidGrid(format!(
                "need finite p_min < p_max, got [{p_min}, {p_max}]"
            )));
        }
        if n_p < 16 || !n_p.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "momentum count must be a power of two >= 16, got {n_p}"
            )));
        }
        Ok(Self { x, p_min, p_max, n_p })
    }

    pub fn x_grid(&self) -> &SpatialGrid {
        &self.x
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn np(&self) -> usize {
        self.n_p
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn dx(&self) -> f64 {
        self.x.dx()
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.n_p as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dp()
    }

    #[inline]
    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.n_p).map(|j| self.p(j)).collect()
    }

    /// Index of the momentum sample closest to `p`, clamped to the grid.
    pub fn nearest_p_index(&self, p: f64) -> usize {
        let j = ((p - self.p_min) / self.dp()).round();
        j.clamp(0.0, (self.n_p - 1) as f64) as usize
    }
}

/// Static polynomial plus sinusoidal drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    /// Ascending-power coefficients `c_0 .. c_d`, `d <= 6`.
    coeffs: Vec<f64>,
    drive_amp: f64,
    drive_omega: f64,
}

/// Force `F = -dV/dx` and its first two position derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceDerivatives {
    pub force: f64,
    pub gradient: f64,
    pub curvature: f64,
}

impl PotentialSpec {
    pub fn new(coeffs: Vec<f64>, drive_amp: f64, drive_omega: f64) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > MAX_DEGREE + 1 {
            return Err(Error::InvalidModel(format!(
                "polynomial needs 1..={} coefficients, got {}",
                MAX_DEGREE + 1,
                coeffs.len()
            )));
        }
        if coeffs.iter().chain([&drive_amp, &drive_omega]).any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite potential parameter".into()));
        }
        Ok(Self { coeffs, drive_amp, drive_omega })
    }

    /// `V(x) = x^2 / 2`.
    pub fn harmonic() -> Self {
        Self::new(vec![0.0, 0.0, 0.5], 0.0, 0.0).expect("valid")
    }

    /// `V = 0`.
    pub fn free() -> Self {
        Self::new(vec![0.0], 0.0, 0.0).expect("valid")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn drive_amp(&self) -> f64 {
        self.drive_amp
    }

    pub fn drive_omega(&self) -> f64 {
        self.drive_omega
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Copy with the drive switched off.
    pub fn undriven(&self) -> Self {
        Self { drive_amp: 0.0, ..self.clone() }
    }

    /// Period `2 pi / omega` of the drive, if it has a frequency.
    pub fn drive_period(&self) -> Option<f64> {
        (self.drive_omega > 0.0).then(|| 2.0 * PI / self.drive_omega)
    }

    /// Drive coefficient multiplying `x` at time `t`.
    #[inline]
    pub fn drive(&self, t: f64) -> f64 {
        if self.drive_amp == 0.0 {
            0.0
        } else {
            self.drive_amp * (self.drive_omega * t).cos()
        }
    }

    /// `order`-th derivative of the static polynomial at `x`.
    pub fn static_derivative(&self, order: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for j in (order..self.coeffs.len()).rev() {
            let falling: f64 = ((j - order + 1)..=j).map(|m| m as f64).product();
            acc = acc * x + self.coeffs[j] * falling;
        }
        acc
    }

    pub fn static_value(&self, x: f64) -> f64 {
        self.static_derivative(0, x)
    }

    #[inline]
    pub fn value(&self, x: f64, t: f64) -> f64 {
        self.static_value(x) + self.drive(t) * x
    }

    #[inline]
    pub fn force(&self, x: f64, t: f64) -> f64 {
        -(self.static_derivative(1, x) + self.drive(t))
    }

    pub fn force_and_derivatives(&self, x: f64, t: f64) -> ForceDerivatives {
        ForceDerivatives {
            force: self.force(x, t),
            gradient: -self.static_derivative(2, x),
            curvature: -self.static_derivative(3, x),
        }
    }

    /// Ascending coefficients of `-dV0/dx`.
    fn force_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().enumerate().skip(1).map(|(j, c)| -(j as f64) * c).collect()
    }

    /// `<F>` for `x ~ Normal(mean, var)`, exact for the polynomial force.
    pub fn gaussian_mean_force(&self, mean: f64, var: f64, t: f64) -> f64 {
        gaussian_polynomial_mean(&self.force_coeffs(), mean, var) - self.drive(t)
    }

    /// `<dF/dx>` for `x ~ Normal(mean, var)`.
    pub fn gaussian_mean_gradient(&self, mean: f64, var: f64) -> f64 {
        let fc = self.force_coeffs();
        let grad: Vec<f64> = fc.iter().enumerate().skip(1).map(|(j, c)| j as f64 * c).collect();
        gaussian_polynomial_mean(&grad, mean, var)
    }

    /// `V(x + d/2) - V(x - d/2)` split into its leading term `V'(x) d` and
    /// the remainder carrying the odd derivatives of order three and up.
    pub fn chord_difference(&self, x: f64, d: f64, t: f64) -> (f64, f64) {
        let leading = (self.static_derivative(1, x) + self.drive(t)) * d;
        let mut rest = 0.0;
        let mut order = 3;
        while order <= self.degree() {
            let fact: f64 = (1..=order).map(|m| m as f64).product();
            rest += 2.0 * self.static_derivative(order, x) * (d / 2.0).powi(order as i32) / fact;
            order += 2;
        }
        (leading, rest)
    }
}

/// `E[P(X)]` for `X ~ Normal(mean, var)` and ascending coefficients `coeffs`.
pub(crate) fn gaussian_polynomial_mean(coeffs: &[f64], mean: f64, var: f64) -> f64 {
    // raw moments: m_j = mean * m_{j-1} + (j-1) var m_{j-2}
    let mut prev = 1.0;
    let mut cur = mean;
    let mut acc = coeffs.first().copied().unwrap_or(0.0);
    for (j, c) in coeffs.iter().enumerate().skip(1) {
        if j > 1 {
            let next = mean * cur + (j as f64 - 1.0) * var * prev;
            prev = cur;
            cur = next;
        }
        acc += c * cur;
    }
    acc
}

/// Full physical configuration: potential, mass, `hbar`, measurement strength
/// `k` and environmental momentum diffusion `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub potential: PotentialSpec,
    pub mass: f64,
    pub hbar: f64,
    pub k: f64,
    pub diffusion: f64,
}

impl ModelSpec {
    pub fn new(potential: PotentialSpec, mass: f64, hbar: f64, k: f64, diffusion: f64) -> Result<Self> {
        let m = Self { potential, mass, hbar, k, diffusion };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidModel(format!("{what} = {v}"));
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(bad("mass must be > 0, got mass", self.mass));
        }
        if !(self.hbar.is_finite() && self.hbar >= 0.0) {
            return Err(bad("hbar must be >= 0, got hbar", self.hbar));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(bad("k must be >= 0, got k", self.k));
        }
        if !(self.diffusion.is_finite() && self.diffusion >= 0.0) {
            return Err(bad("D must be >= 0, got D", self.diffusion));
        }
        Ok(())
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn with_diffusion(mut self, d: f64) -> Self {
        self.diffusion = d;
        self
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    /// Momentum diffusion from measurement backaction, `hbar^2 k`.
    pub fn backaction_diffusion(&self) -> f64 {
        self.hbar * self.hbar * self.k
    }

    /// Total momentum diffusion of the unconditioned quantum evolution:
    /// environment plus backaction.
    pub fn quantum_diffusion(&self) -> f64 {
        self.diffusion + self.backaction_diffusion()
    }

    pub fn energy(&self, x: f64, p: f64, t: f64) -> f64 {
        p * p / (2.0 * self.mass) + self.potential.value(x, t)
    }

    /// Drive period, falling back to `2 pi` for undriven frequency-less models.
    pub fn period(&self) -> f64 {
        self.potential.drive_period().unwrap_or(2.0 * PI)
    }
}

/// Driven double-well Duffing oscillator
/// `H = p^2/2m + 0.5 x^4 - 10 x^2 + 10 x cos(6.07 t)` with `m = 1`;
/// `hbar`, `k` and `D` are zero and left to the caller.
pub fn duffing_spec() -> ModelSpec {
    let potential =
        PotentialSpec::new(vec![0.0, 0.0, -10.0, 0.0, 0.5], 10.0, 6.07).expect("valid coefficients");
    ModelSpec { potential, mass: 1.0, hbar: 0.0, k: 0.0, diffusion: 0.0 }
}

/// `(F, dF/dx, d2F/dx2)` at `(x, t)`.
pub fn force_and_derivatives(spec: &PotentialSpec, x: f64, t: f64) -> ForceDerivatives {
    spec.force_and_derivatives(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn duffing_values() {
        let m = duffing_spec();
        assert_eq!(m.potential.static_value(2.0), -32.0);
        // the drive adds Λ x cos(ωt) = 20 at (2, 0)
        assert_eq!(m.potential.value(2.0, 0.0), -12.0);
        for t in [0.0, 0.3, 17.0] {
            assert_eq!(m.potential.value(0.0, t), 0.0);
        }
        let fd = m.potential.force_and_derivatives(1.0, 0.0);
        assert_eq!(fd.force, 8.0);
        assert_eq!(fd.gradient, 14.0);
        assert_eq!(fd.curvature, -12.0);
        assert_eq!(m.mass, 1.0);
        assert_abs_diff_eq!(m.period(), 2.0 * PI / 6.07);
    }

    #[test]
    fn harmonic_force() {
        let v = PotentialSpec::harmonic();
        let fd = force_and_derivatives(&v, 3.0, 1.234);
        assert_eq!((fd.force, fd.gradient, fd.curvature), (-3.0, -1.0, 0.0));
    }

    #[test]
    fn force_matches_central_differences() {
        let v = duffing_spec().potential;
        let h = 1e-4;
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            let t = 0.37 * i as f64;
            let fd = (v.value(x + h, t) - v.value(x - h, t)) / (2.0 * h);
            assert!((v.force(x, t) + fd).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn undriven_is_time_independent() {
        let v = duffing_spec().potential.undriven();
        for x in [-3.0, 0.5, 4.0] {
            assert_eq!(v.value(x, 0.1), v.value(x, 12.9));
        }
    }

    #[test]
    fn gaussian_means_match_quadrature() {
        let v = duffing_spec().potential;
        let (mu, var): (f64, f64) = (0.7, 0.3);
        let s = var.sqrt();
        // Gauss-Hermite-free check: fine trapezoid over +-10 sigma
        let n = 20_000;
        let (mut f, mut g) = (0.0, 0.0);
        for i in 0..=n {
            let z = -10.0 + 20.0 * i as f64 / n as f64;
            let w = (-0.5 * z * z).exp() / (2.0 * PI).sqrt() * 20.0 / n as f64;
            let w = if i == 0 || i == n { 0.5 * w } else { w };
            let x = mu + s * z;
            f += w * v.force(x, 0.4);
            g += w * v.force_and_derivatives(x, 0.4).gradient;
        }
        assert_abs_diff_eq!(v.gaussian_mean_force(mu, var, 0.4), f, epsilon = 1e-9);
        assert_abs_diff_eq!(v.gaussian_mean_gradient(mu, var), g, epsilon = 1e-9);
    }

    #[test]
    fn chord_difference_is_exact() {
        let v = PotentialSpec::new(vec![0.3, -1.0, 2.0, 0.5, -0.25, 0.1, 0.02], 1.5, 2.0).unwrap();
        for (x, d) in [(0.3, 0.7), (-1.2, 2.5), (2.0, -0.4)] {
            let (lead, rest) = v.chord_difference(x, d, 0.8);
            let exact = v.value(x + d / 2.0, 0.8) - v.value(x - d / 2.0, 0.8);
            assert_abs_diff_eq!(lead + rest, exact, epsilon = 1e-11);
        }
        let (_, rest) = PotentialSpec::harmonic().chord_difference(1.0, 3.0, 0.0);
        assert_eq!(rest, 0.0);
    }

    #[test]
    fn grid_validation() {
        assert!(SpatialGrid::new(-1.0, 1.0, 100).is_err());
        assert!(SpatialGrid::new(-1.0, 1.0, 8).is_err());
        assert!(SpatialGrid::new(1.0, -1.0, 64).is_err());
        let g = SpatialGrid::new(-4.0, 4.0, 64).unwrap();
        assert_abs_diff_eq!(g.dx(), 0.125);
        let p = g.momenta(1.0);
        assert_abs_diff_eq!(p[32], -g.p_max(1.0));
        assert!(p.iter().all(|&q| q < g.p_max(1.0)));
        let ps = PhaseSpaceGrid::new(g, -8.0, 8.0, 64).unwrap();
        assert!(ps.cell_area() > 0.0);
        assert!(PhaseSpaceGrid::new(g, -8.0, 8.0, 60).is_err());
    }

    #[test]
    fn model_validation() {
        let m = duffing_spec();
        assert!(m.clone().with_k(-1.0).validate().is_err());
        assert!(ModelSpec::new(m.potential.clone(), 0.0, 1.0, 0.0, 0.0).is_err());
        let q = m.with_hbar(0.1).with_k(3.0);
        assert_abs_diff_eq!(q.backaction_diffusion(), 0.03, epsilon = 1e-15);
        assert_eq!(q.backaction_diffusion(), q.hbar * q.hbar * q.k);
    }

    proptest! {
        #[test]
        fn derivatives_agree_with_finite_differences(
            c in proptest::collection::vec(-2.0f64..2.0, 1..=7),
            x in -3.0f64..3.0,
            t in 0.0f64..10.0,
        ) {
            let v = PotentialSpec::new(c, 1.3, 2.1).unwrap();
            let h = 1e-4;
            let fd = v.force_and_derivatives(x, t);
            let f = |y: f64| v.force(y, t);
            let scale = 1.0 + f(x).abs() + fd.gradient.abs() + fd.curvature.abs();
            let g_fd = (f(x + h) - f(x - h)) / (2.0 * h);
            let c_fd = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            prop_assert!((fd.gradient - g_fd).abs() < 1e-5 * scale);
            prop_assert!((fd.curvature - c_fd).abs() < 1e-3 * scale);
        }
    }
}
