//! Wigner function of a density matrix,
//!
//! ```text
//! f_W(x, p) = 1/(2πħ) ∫ dΔ e^{−ipΔ/ħ} ρ(x + Δ/2, x − Δ/2).
//! ```
//!
//! At grid point `x_i`, separations `Δ = m dx` with even `m` read `ρ` on the
//! grid; odd `m` need `ρ` at half-cell offsets, which come from a spectral
//! half-cell shift of both indices. The `2n` separations give `2n` momenta
//! spanning `[−πħ/dx, πħ/dx)` with spacing `πħ/(n dx)`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::field::PhaseSpaceField;
use crate::model::PhaseSpaceGrid;
use crate::quantum::density::DensityState;
use crate::spectral::{transpose_square, Fft, C64, ZERO};

/// Momentum grid on which [`wigner_transform`] reports its result.
pub fn wigner_grid(rho: &DensityState, hbar: f64) -> PhaseSpaceGrid {
    let g = *rho.grid();
    let p_max = PI * hbar / g.dx();
    PhaseSpaceGrid::new(g, -p_max, p_max, 2 * g.len()).expect("doubling a valid grid stays valid")
}

/// `ρ(x_a + dx/2, x_b + dx/2)`.
fn half_shifted(rho: &DensityState) -> Vec<C64> {
    let n = rho.grid().len();
    let inv_n = 1.0 / n as f64;
    // e^{i p (dx/2)/ħ} = e^{iπ j/n}; the unsigned Nyquist bin is dropped
    let mult: Vec<C64> = (0..n)
        .map(|j| {
            let jj = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            if j == n / 2 {
                ZERO
            } else {
                C64::from_polar(inv_n, PI * jj / n as f64)
            }
        })
        .collect();
    let fft = Fft::new(n);
    let mut m = rho.matrix().to_vec();
    fft.convolve_rows(&mut m, &mult);
    transpose_square(&mut m, n, false);
    fft.convolve_rows(&mut m, &mult);
    transpose_square(&mut m, n, false);
    m
}

pub fn wigner_transform(rho: &DensityState, hbar: f64) -> PhaseSpaceField {
    let g = *rho.grid();
    let n = g.len();
    let grid = wigner_grid(rho, hbar);
    let half = half_shifted(rho);
    let full = rho.matrix();
    let norm = g.dx() / (2.0 * PI * hbar);
    let two_n = 2 * n;

    let mut values = vec![0.0; n * two_n];
    values.par_chunks_mut(two_n).enumerate().for_each_init(
        || (Fft::new(two_n), vec![ZERO; two_n]),
        |(fft, buf), (i, out)| {
            buf.iter_mut().for_each(|b| *b = ZERO);
            let ii = i as isize;
            let n_i = n as isize;
            for m in -n_i..n_i {
                let v = if m.rem_euclid(2) == 0 {
                    let mu = m / 2;
                    let (a, b) = (ii + mu, ii - mu);
                    if a < 0 || b < 0 || a >= n_i || b >= n_i {
                        continue;
                    }
                    full[a as usize * n + b as usize]
                } else {
                    let mu = (m - 1).div_euclid(2);
                    let (a, b) = (ii + mu, ii - mu - 1);
                    if a < 0 || b < 0 || a >= n_i || b >= n_i {
                        continue;
                    }
                    half[a as usize * n + b as usize]
                };
                buf[m.rem_euclid(two_n as isize) as usize] = v;
            }
            fft.forward(buf);
            // ascending momenta: output j holds frequency index l = j − n
            for (j, o) in out.iter_mut().enumerate() {
                let l = (j + n) % two_n;
                *o = buf[l].re * norm;
            }
        },
    );
    PhaseSpaceField::new(grid, values, rho.t()).expect("shape matches grid")
}
