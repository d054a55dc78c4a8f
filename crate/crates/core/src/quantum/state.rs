use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SpatialGrid;
use crate::spectral::{Fft, C64, ZERO};

/// Fraction of grid cells (split evenly between both ends) watched for
/// probability leaking towards the boundary.
pub const BOUNDARY_FRACTION: f64 = 0.05;
/// Largest tolerated probability in the boundary cells.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;

/// Number of cells at each end of the grid that count as boundary.
pub(crate) fn edge_cells(n: usize) -> usize {
    ((n as f64 * BOUNDARY_FRACTION / 2.0).ceil() as usize).max(1)
}

/// Wavefunction samples `ψ(x_i)` on a position grid.
#[derive(Debug, Clone)]
pub struct SpatialState {
    grid: SpatialGrid,
    psi: Vec<C64>,
    t: f64,
}

/// First and second moments of a state; `cxp` is the symmetrized covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSet {
    pub x: f64,
    pub p: f64,
    pub vx: f64,
    pub vp: f64,
    pub cxp: f64,
    pub t: f64,
}

impl MomentSet {
    /// `Vx Vp − Cxp²`, bounded below by `(ħ/2)²` for quantum states.
    pub fn uncertainty_product(&self) -> f64 {
        self.vx * self.vp - self.cxp * self.cxp
    }
}

impl SpatialState {
    pub fn new(grid: SpatialGrid, psi: Vec<C64>, t: f64) -> Result<Self> {
        if psi.len() != grid.len() {
            return Err(Error::InvalidGrid(format!("{} amplitudes for a grid of {}", psi.len(), grid.len())));
        }
        Ok(Self { grid, psi, t })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> C64) -> Self {
        let psi = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self { grid, psi, t: 0.0 }
    }

    /// Minimum-uncertainty Gaussian centred at `(x0, p0)` with position width
    /// `sigma_x`, normalized on the grid.
    pub fn coherent(grid: SpatialGrid, hbar: f64, x0: f64, p0: f64, sigma_x: f64) -> Self {
        let mut s = Self::from_fn(grid, |x| {
            let d = x - x0;
            C64::from_polar((-d * d / (4.0 * sigma_x * sigma_x)).exp(), p0 * d / hbar)
        });
        s.normalize();
        s
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.psi
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.psi
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    pub fn norm_sq(&self) -> f64 {
        self.psi.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq();
        if n > 0.0 {
            let s = 1.0 / n.sqrt();
            self.psi.iter_mut().for_each(|a| *a *= s);
        }
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability in the outer cells of the grid.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.psi.len();
        let e = edge_cells(n);
        let s: f64 = self.psi[..e].iter().chain(&self.psi[n - e..]).map(|a| a.norm_sqr()).sum();
        s * self.grid.dx()
    }

    pub fn is_finite(&self) -> bool {
        self.psi.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Raise `GridOverflow`/`NonfiniteState` if the state is no longer valid.
    pub fn check(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonfiniteState { t: self.t });
        }
        let mass = self.boundary_mass();
        if mass > BOUNDARY_TOLERANCE {
            return Err(Error::GridOverflow { t: self.t, mass });
        }
        Ok(())
    }

    pub fn moments(&self, hbar: f64) -> MomentSet {
        MomentEvaluator::new(self.grid, hbar).moments(self)
    }

    /// `⟨ψ|H|ψ⟩` for `H = p²/2m + V(x)`, with `V` sampled on the grid.
    pub fn energy(&self, hbar: f64, mass: f64, v: impl Fn(f64) -> f64) -> f64 {
        let n = self.psi.len();
        let mut fft = Fft::new(n);
        let mut buf = self.psi.clone();
        fft.forward(&mut buf);
        let p = self.grid.momenta(hbar);
        let w: f64 = buf.iter().map(|a| a.norm_sqr()).sum();
        let kin: f64 = buf.iter().zip(&p).map(|(a, p)| a.norm_sqr() * p * p).sum::<f64>() / w / (2.0 * mass);
        let pot: f64 = self.psi.iter().enumerate().map(|(i, a)| a.norm_sqr() * v(self.grid.x(i))).sum::<f64>()
            * self.grid.dx()
            / self.norm_sq();
        kin + pot
    }
}

/// Reusable moment evaluation with a cached transform.
#[derive(Debug, Clone)]
pub struct MomentEvaluator {
    grid: SpatialGrid,
    fft: Fft,
    p: Vec<f64>,
    buf: Vec<C64>,
}

impl MomentEvaluator {
    pub fn new(grid: SpatialGrid, hbar: f64) -> Self {
        let n = grid.len();
        Self { grid, fft: Fft::new(n), p: grid.momenta(hbar), buf: vec![ZERO; n] }
    }

    pub fn moments(&mut self, state: &SpatialState) -> MomentSet {
        let psi = state.amplitudes();
        let n = psi.len();
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (i, a) in psi.iter().enumerate() {
            let w = a.norm_sqr();
            let x = self.grid.x(i);
            m0 += w;
            m1 += w * x;
            m2 += w * x * x;
        }
        let x = m1 / m0;
        let vx = m2 / m0 - x * x;

        self.buf.copy_from_slice(psi);
        self.fft.forward(&mut self.buf);
        let (mut w0, mut p1, mut p2) = (0.0, 0.0, 0.0);
        for (a, &p) in self.buf.iter().zip(&self.p) {
            let w = a.norm_sqr();
            w0 += w;
            p1 += w * p;
            p2 += w * p * p;
        }
        let p = p1 / w0;
        let vp = p2 / w0 - p * p;

        // Re⟨ψ| x P |ψ⟩ = ½⟨xP + Px⟩
        let inv_n = 1.0 / n as f64;
        for (a, &pj) in self.buf.iter_mut().zip(&self.p) {
            *a *= pj * inv_n;
        }
        self.fft.inverse(&mut self.buf);
        let mut xp = 0.0;
        for (i, (a, b)) in psi.iter().zip(&self.buf).enumerate() {
            xp += self.grid.x(i) * (a.conj() * b).re;
        }
        let cxp = xp / m0 - x * p;
        MomentSet { x, p, vx, vp, cxp, t: state.t() }
    }

    /// Centroid `(⟨x⟩, ⟨p⟩)` only.
    pub fn centroid(&mut self, state: &SpatialState) -> (f64, f64) {
        let psi = state.amplitudes();
        let (mut m0, mut m1) = (0.0, 0.0);
        for (i, a) in psi.iter().enumerate() {
            let w = a.norm_sqr();
            m0 += w;
            m1 += w * self.grid.x(i);
        }
        self.buf.copy_from_slice(psi);
        self.fft.forward(&mut self.buf);
        let (mut w0, mut p1) = (0.0, 0.0);
        for (a, &p) in self.buf.iter().zip(&self.p) {
            let w = a.norm_sqr();
            w0 += w;
            p1 += w * p;
        }
        (m1 / m0, p1 / w0)
    }
}

/// Phase-space displacement `ψ(x) → e^{i δp x/ħ} ψ(x − δx)`, realized
/// spectrally so that it is exact for band-limited states.
#[derive(Debug, Clone)]
pub struct Displacer {
    grid: SpatialGrid,
    hbar: f64,
    fft: Fft,
    p: Vec<f64>,
    mult: Vec<C64>,
}

impl Displacer {
    pub fn new(grid: SpatialGrid, hbar: f64) -> Self {
        let n = grid.len();
        Self { grid, hbar, fft: Fft::new(n), p: grid.momenta(hbar), mult: vec![ZERO; n] }
    }

    pub fn displace(&mut self, state: &mut SpatialState, dx: f64, dp: f64) {
        let n = self.grid.len();
        if dx != 0.0 {
            let inv_n = 1.0 / n as f64;
            for (j, (m, &p)) in self.mult.iter_mut().zip(&self.p).enumerate() {
                // the Nyquist bin has no sign; keep the shift real there
                *m = if j == n / 2 {
                    C64::new((p * dx / self.hbar).cos() * inv_n, 0.0)
                } else {
                    C64::from_polar(inv_n, -p * dx / self.hbar)
                };
            }
            self.fft.convolve(state.amplitudes_mut(), &self.mult);
        }
        if dp != 0.0 {
            // anchor the phase at x = 0 so successive kicks compose exactly
            let g = self.grid;
            for (i, a) in state.amplitudes_mut().iter_mut().enumerate() {
                *a *= C64::from_polar(1.0, dp * g.x(i) / self.hbar);
            }
        }
        state.normalize();
    }
}

/// Shift the centroid of `state` by `delta` along the unit direction
/// `(cos θ, sin θ)` in the (x, p) plane.
pub fn perturb_initial(state: &SpatialState, hbar: f64, delta: f64, angle: f64) -> SpatialState {
    let mut out = state.clone();
    if delta != 0.0 {
        Displacer::new(*state.grid(), hbar).displace(&mut out, delta * angle.cos(), delta * angle.sin());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn grid() -> SpatialGrid {
        SpatialGrid::new(-10.0, 10.0, 512).unwrap()
    }

    #[test]
    fn coherent_state_moments() {
        let hbar = 0.5;
        let sx = 0.8;
        let s = SpatialState::coherent(grid(), hbar, 1.5, -2.0, sx);
        assert!((s.norm_sq() - 1.0).abs() < 1e-12);
        let m = s.moments(hbar);
        assert!((m.x - 1.5).abs() < 1e-10, "{m:?}");
        assert!((m.p + 2.0).abs() < 1e-10, "{m:?}");
        assert!((m.vx - sx * sx).abs() < 1e-10);
        assert!((m.vp - (hbar / (2.0 * sx)).powi(2)).abs() < 1e-10);
        assert!(m.cxp.abs() < 1e-10);
        assert!((m.uncertainty_product() - hbar * hbar / 4.0).abs() < 1e-6 * hbar * hbar);
    }

    #[test]
    fn moments_match_direct_quadrature() {
        // oracle: finite-difference-free O(n^2) DFT sums
        let g = SpatialGrid::new(-4.0, 4.0, 64).unwrap();
        let hbar = 0.7;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let amps = (0..g.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let mut s = SpatialState::new(g, amps, 0.0).unwrap();
        s.normalize();
        let m = s.moments(hbar);
        let n = g.len();
        let psi = s.amplitudes();
        let p = g.momenta(hbar);
        // momentum amplitudes by explicit DFT
        let phi: Vec<C64> = (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| psi[i] * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64))
                    .sum()
            })
            .collect();
        let w: f64 = phi.iter().map(|a| a.norm_sqr()).sum();
        let pm: f64 = phi.iter().zip(&p).map(|(a, p)| a.norm_sqr() * p).sum::<f64>() / w;
        let p2: f64 = phi.iter().zip(&p).map(|(a, p)| a.norm_sqr() * p * p).sum::<f64>() / w;
        let xm: f64 = (0..n).map(|i| psi[i].norm_sqr() * g.x(i)).sum::<f64>() * g.dx();
        let x2: f64 = (0..n).map(|i| psi[i].norm_sqr() * g.x(i).powi(2)).sum::<f64>() * g.dx();
        // (Pψ)_i by explicit inverse DFT
        let pp: Vec<C64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| phi[j] * p[j] * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64))
                    .sum::<C64>()
                    / n as f64
            })
            .collect();
        let xp: f64 = (0..n).map(|i| g.x(i) * (psi[i].conj() * pp[i]).re).sum::<f64>() * g.dx();
        assert!((m.x - xm).abs() < 1e-10);
        assert!((m.p - pm).abs() < 1e-10);
        assert!((m.vx - (x2 - xm * xm)).abs() < 1e-10);
        assert!((m.vp - (p2 - pm * pm)).abs() < 1e-10);
        assert!((m.cxp - (xp - xm * pm)).abs() < 1e-10);
    }

    #[test]
    fn displacement_shifts_centroid_only() {
        let hbar = 0.3;
        let s = SpatialState::coherent(grid(), hbar, 0.2, 0.1, 0.6);
        let m0 = s.moments(hbar);
        assert_eq!(perturb_initial(&s, hbar, 0.0, 1.0).amplitudes(), s.amplitudes());

        let d = perturb_initial(&s, hbar, 0.05, 0.0);
        let m1 = d.moments(hbar);
        assert!((m1.x - m0.x - 0.05).abs() < 1e-10);
        assert!((m1.vx - m0.vx).abs() < 1e-10);

        let mut twice = s.clone();
        let mut disp = Displacer::new(grid(), hbar);
        disp.displace(&mut twice, 0.01, 0.02);
        disp.displace(&mut twice, 0.01, 0.02);
        let once = perturb_initial(&s, hbar, (0.02f64.powi(2) + 0.04f64.powi(2)).sqrt(), 2.0f64.atan());
        let (a, b) = (twice.moments(hbar), once.moments(hbar));
        assert!((a.x - b.x).abs() < 1e-10 && (a.p - b.p).abs() < 1e-10);
    }

    #[test]
    fn boundary_mass_detects_leak() {
        let hbar = 1.0;
        let s = SpatialState::coherent(grid(), hbar, 0.0, 0.0, 1.0);
        assert!(s.check().is_ok());
        let far = SpatialState::coherent(grid(), hbar, 9.5, 0.0, 1.0);
        assert!(matches!(far.check(), Err(Error::GridOverflow { .. })));
    }
}
