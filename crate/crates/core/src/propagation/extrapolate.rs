//! nu -> infinity extrapolation of kernel values.

use num_complex::Complex64 as C64;

use super::{PropagationError, PropagationResult};

/// Result of fitting value(nu) = limit + A exp(-gamma nu T).
#[derive(Debug, Clone, Copy)]
pub struct NuFit {
    pub limit: C64,
    pub amplitude: C64,
    /// Decay rate gamma in exp(-gamma nu T).
    pub gap: f64,
    /// Root-mean-square misfit of the model over the input points.
    pub residual: f64,
}

/// Fits value(nu) = limit + A exp(-gamma nu T) to kernel values at several
/// nu, by profiled least squares: (limit, A) are solved linearly for each
/// gamma and gamma is found by a bracketed scan plus golden-section
/// refinement on the residuals to the largest-nu value.
///
/// Errors when fewer than 3 distinct nu are supplied or when the residual
/// magnitudes fail to decrease with nu (no exponential convergence to
/// fit).
pub fn nu_extrapolate(estimates: &[(f64, C64)], t: f64) -> PropagationResult<NuFit> {
    let mut pts: Vec<(f64, C64)> = estimates.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
    let n = pts.len();
    if n < 3 {
        return Err(PropagationError::TooFewPoints(n));
    }

    let v_ref = pts[n - 1].1;
    let resid: Vec<(f64, f64)> = pts[..n - 1]
        .iter()
        .map(|&(nu, v)| (nu, (v - v_ref).norm()))
        .collect();
    // Exponential convergence shows up as strictly decreasing residuals;
    // anything else means the data cannot support the fit.
    let floor = 64.0 * f64::EPSILON * v_ref.norm().max(1.0);
    for w in resid.windows(2) {
        if w[1].1 > w[0].1.max(floor) {
            return Err(PropagationError::FitQuality(
                "residuals to the largest-nu value do not decrease with nu",
            ));
        }
    }

    // Initial gamma from the slope of log-residuals over usable points.
    let usable: Vec<(f64, f64)> = resid.iter().copied().filter(|&(_, r)| r > floor).collect();
    let gamma0 = if usable.len() >= 2 {
        let mut slopes = Vec::new();
        for w in usable.windows(2) {
            let (nu_a, r_a) = w[0];
            let (nu_b, r_b) = w[1];
            slopes.push(((r_a / r_b).ln() / ((nu_b - nu_a) * t)).max(1e-8));
        }
        slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        slopes[slopes.len() / 2]
    } else {
        1.0
    };

    let sum_sq = |gamma: f64| -> (f64, C64, C64) {
        // Profile out (limit, A) for this gamma by complex least squares
        // on all points.
        let e: Vec<f64> = pts.iter().map(|&(nu, _)| (-gamma * nu * t).exp()).collect();
        let n_f = n as f64;
        let se: f64 = e.iter().sum();
        let see: f64 = e.iter().map(|x| x * x).sum();
        let sv: C64 = pts.iter().map(|&(_, v)| v).sum();
        let sev: C64 = pts.iter().zip(&e).map(|(&(_, v), &x)| v * x).sum();
        let det = n_f * see - se * se;
        if det.abs() < 1e-300 {
            return (f64::INFINITY, C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        }
        let limit = (sv * see - sev * se) / det;
        let amp = (sev * n_f - sv * se) / det;
        let ss: f64 = pts
            .iter()
            .zip(&e)
            .map(|(&(_, v), &x)| (v - limit - amp * x).norm_sqr())
            .sum();
        (ss, limit, amp)
    };

    // Bracketed golden-section minimization in ln(gamma).
    let mut lo = (gamma0 / 8.0).ln();
    let mut hi = (gamma0 * 8.0).ln();
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = sum_sq(x1.exp()).0;
    let mut f2 = sum_sq(x2.exp()).0;
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sum_sq(x1.exp()).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sum_sq(x2.exp()).0;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let gamma = (0.5 * (lo + hi)).exp();
    let (ss, limit, amplitude) = sum_sq(gamma);
    Ok(NuFit { limit, amplitude, gap: gamma, residual: (ss / n as f64).sqrt() })
}
