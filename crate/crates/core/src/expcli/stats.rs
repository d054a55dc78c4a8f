//! Small statistics used by the experiments: kernel density on a grid,
//! two-sample Kolmogorov–Smirnov, and log–log slope fits.

/// Two-sample KS statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d))
}

/// `Q(λ) = 2 Σ (−1)^{j−1} e^{−2 j² λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Least-squares slope and intercept of `ln y` against `ln x` over pairs
/// with positive coordinates.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Gaussian kernel density of 2-D points on the grid `xs × ps`, scaled so
/// the maximum is one. Returns the x-major values.
pub fn kde_grid(points: &[(f64, f64)], xs: &[f64], ps: &[f64], bandwidth: (f64, f64)) -> Vec<f64> {
    let (hx, hp) = bandwidth;
    let n = ps.len();
    let mut out = vec![0.0; xs.len() * n];
    for &(x, p) in points {
        // the kernel is separable, so one row and one column suffice
        let kx: Vec<f64> = xs.iter().map(|g| (-0.5 * ((g - x) / hx).powi(2)).exp()).collect();
        let kp: Vec<f64> = ps.iter().map(|g| (-0.5 * ((g - p) / hp).powi(2)).exp()).collect();
        for (i, a) in kx.iter().enumerate() {
            if *a < 1e-12 {
                continue;
            }
            for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(&kp) {
                *o += a * b;
            }
        }
    }
    let max = out.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        out.iter_mut().for_each(|v| *v /= max);
    }
    out
}

/// Scott's rule bandwidths `σ n^{−1/6}` for 2-D data.
pub fn scott_bandwidth(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len().max(2) as f64;
    let sd = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let m = points.iter().map(f).sum::<f64>() / n;
        (points.iter().map(|q| (f(q) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let factor = n.powf(-1.0 / 6.0);
    (sd(&|q| q.0).max(1e-12) * factor, sd(&|q| q.1).max(1e-12) * factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = a.iter().map(|v| v + 0.3).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.3).abs() < 0.01 && p < 1e-6);
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 / v).collect();
        let (s, c) = loglog_slope(&x, &y).unwrap();
        assert!((s + 1.0).abs() < 1e-12 && (c - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kde_peaks_at_cluster() {
        let pts = vec![(1.0, -1.0); 10];
        let axis: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let g = kde_grid(&pts, &axis, &axis, (0.2, 0.2));
        let (imax, _) = g.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        assert_eq!((imax / 41, imax % 41), (30, 10));
        assert!((g[imax] - 1.0).abs() < 1e-12);
    }
}
