//! Real-valued functions on an (x, p) grid: Wigner functions and classical
//! phase-space densities share this container.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PhaseSpaceGrid;

/// Field values stored x-major: `values[i * n_p + j] = f(x_i, p_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceField {
    grid: PhaseSpaceGrid,
    values: Vec<f64>,
    t: f64,
}

/// Classical distributions are plain phase-space fields.
pub type ClassicalField = PhaseSpaceField;

impl PhaseSpaceField {
    pub fn new(grid: PhaseSpaceGrid, values: Vec<f64>, t: f64) -> Result<Self> {
        if values.len() != grid.nx() * grid.np() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.nx() * grid.np()
            )));
        }
        Ok(Self { grid, values, t })
    }

    pub fn zeros(grid: PhaseSpaceGrid) -> Self {
        Self { values: vec![0.0; grid.nx() * grid.np()], grid, t: 0.0 }
    }

    pub fn from_fn(grid: PhaseSpaceGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.nx() * grid.np());
        for i in 0..grid.nx() {
            let x = grid.x_grid().x(i);
            for j in 0..grid.np() {
                values.push(f(x, grid.p(j)));
            }
        }
        Self { grid, values, t: 0.0 }
    }

    /// Normalized Gaussian with the given centre, widths and zero correlation.
    pub fn gaussian(grid: PhaseSpaceGrid, x0: f64, p0: f64, sigma_x: f64, sigma_p: f64) -> Self {
        let mut f = Self::from_fn(grid, |x, p| {
            (-(x - x0).powi(2) / (2.0 * sigma_x * sigma_x) - (p - p0).powi(2) / (2.0 * sigma_p * sigma_p)).exp()
        });
        f.normalize();
        f
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.np() + j]
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn normalize(&mut self) {
        let m = self.integral();
        if m != 0.0 {
            let s = 1.0 / m;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Position density `∫ f dp` at each `x_i`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dp = self.grid.dp();
        self.values.chunks(self.grid.np()).map(|row| row.iter().sum::<f64>() * dp).collect()
    }

    /// Momentum density `∫ f dx` at each `p_j`.
    pub fn p_marginal(&self) -> Vec<f64> {
        let np = self.grid.np();
        let mut out = vec![0.0; np];
        for row in self.values.chunks(np) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let dx = self.grid.dx();
        out.iter_mut().for_each(|o| *o *= dx);
        out
    }

    /// Values along `x` at the momentum grid line nearest to `p`.
    pub fn slice_at_p(&self, p: f64) -> Vec<f64> {
        let j = self.grid.nearest_p_index(p);
        (0..self.grid.nx()).map(|i| self.value(i, j)).collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∬ max(-f, 0) dx dp`: total weight of the negative regions.
    pub fn negative_volume(&self) -> f64 {
        self.values.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * self.grid.cell_area()
    }

    /// First and second moments `(⟨x⟩, ⟨p⟩, Vx, Vp, Cxp)` by grid quadrature.
    pub fn moments(&self) -> (f64, f64, f64, f64, f64) {
        let (mut m0, mut mx, mut mp, mut mxx, mut mpp, mut mxp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let np = self.grid.np();
        for (i, row) in self.values.chunks(np).enumerate() {
            let x = self.grid.x_grid().x(i);
            for (j, &f) in row.iter().enumerate() {
                let p = self.grid.p(j);
                m0 += f;
                mx += f * x;
                mp += f * p;
                mxx += f * x * x;
                mpp += f * p * p;
                mxp += f * x * p;
            }
        }
        let (x, p) = (mx / m0, mp / m0);
        (x, p, mxx / m0 - x * x, mpp / m0 - p * p, mxp / m0 - x * p)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Write the values as little-endian `f64`, x-major, with a JSON sidecar
    /// `<stem>.meta.json` describing the grid and any extra metadata.
    pub fn write_snapshot(&self, bin_path: &Path, extra: serde_json::Value) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(bin_path)?);
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        #[derive(Serialize)]
        struct Meta<'a> {
            layout: &'static str,
            dtype: &'static str,
            nx: usize,
            np: usize,
            x_min: f64,
            x_max: f64,
            dx: f64,
            p_min: f64,
            p_max: f64,
            dp: f64,
            t: f64,
            extra: &'a serde_json::Value,
        }
        let g = &self.grid;
        let meta = Meta {
            layout: "row-major [x][p]",
            dtype: "f64le",
            nx: g.nx(),
            np: g.np(),
            x_min: g.x_grid().x_min(),
            x_max: g.x_grid().x_max(),
            dx: g.dx(),
            p_min: g.p_min(),
            p_max: g.p_max(),
            dp: g.dp(),
            t: self.t,
            extra: &extra,
        };
        let meta_path = bin_path.with_extension("meta.json");
        std::fs::write(meta_path, serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }
}

/// `Σ|a − b| dx` between two densities sampled on the same grid.
pub fn l1_distance(a: &[f64], b: &[f64], dx: f64) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>() * dx
}

/// `Σ|a − b| / Σ|b|`: relative L1 distance of two sampled profiles.
pub fn relative_l1(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum();
    let den: f64 = b.iter().map(|v| v.abs()).sum();
    num / den
}
