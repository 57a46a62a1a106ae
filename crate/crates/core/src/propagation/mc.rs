//! Monte Carlo backend: pinned Brownian bridges with the midpoint-rule
//! phase.
//!
//! The N-step chain factorizes as the pinned-endpoint Gaussian density
//! times a bridge expectation,
//!
//!   chain(b; a) = rho_T(b - a) E_bridge[ exp(i sum pbar_k dq_k
//!                                            - i eps sum h(pbar_k, qbar_k)) ],
//!
//! so the kernel estimate is 2 pi e^(nu T/2) rho_T(b - a) times the sample
//! mean of the phase factor. Sampling is chunked with one counter-based
//! RNG stream per chunk and the chunks are reduced in index order, which
//! makes every estimate bitwise reproducible for a fixed (seed, N,
//! samples) regardless of the worker count.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{
    Backend, KernelEstimate, LatticeSpec, PhaseMetric, PropagationError, PropagationResult,
};
use crate::coherent::PhasePoint;
use crate::symbols::SymbolPoly;

/// Paths per RNG stream; part of the determinism contract.
const CHUNK: u64 = 4096;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Flat-metric Monte Carlo estimate of K^nu(to; from).
pub fn mc_kernel(
    spec: &LatticeSpec,
    to: PhasePoint,
    from: PhasePoint,
    h: Option<&SymbolPoly>,
    samples: u64,
    seed: u64,
) -> PropagationResult<KernelEstimate> {
    mc_kernel_metric(spec, PhaseMetric::flat(), to, from, h, samples, seed)
}

/// Monte Carlo estimate with a constant SPD increment metric G:
/// increments are Gaussian with covariance nu eps G^(-1).
pub fn mc_kernel_metric(
    spec: &LatticeSpec,
    metric: PhaseMetric,
    to: PhasePoint,
    from: PhasePoint,
    h: Option<&SymbolPoly>,
    samples: u64,
    seed: u64,
) -> PropagationResult<KernelEstimate> {
    metric.validate()?;
    if (metric.det() - 1.0).abs() > 1e-12 {
        return Err(PropagationError::BadMetric);
    }
    if samples < 1000 {
        return Err(PropagationError::InvalidSpec("need at least 1000 samples"));
    }
    let n = spec.n_steps;
    let eps = spec.epsilon();
    let theta = 0.5 * spec.nu * eps;
    // The same heat-semigroup-improved step as the Gaussian chain: step
    // variance 2 tanh(theta) instead of the raw nu eps = 2 theta, and a
    // normalization factor 1/cosh(theta) per step, so both backends
    // estimate the identical object.
    let step_var = 2.0 * theta.tanh();
    let log_counterterm = -(n as f64) * theta.cosh().ln();

    // Cholesky factor of the step covariance step_var G^(-1).
    let det = metric.det();
    let cov = Matrix2::new(
        metric.g_qq / det * step_var,
        -metric.g_pq / det * step_var,
        -metric.g_pq / det * step_var,
        metric.g_pp / det * step_var,
    );
    let chol = cov.cholesky().ok_or(PropagationError::BadMetric)?;
    let l = chol.l();

    let h_terms: Option<Vec<((u32, u32), C64)>> =
        h.map(|h| h.terms().map(|(&k, &c)| (k, c)).collect());

    let n_chunks = samples.div_ceil(CHUNK);
    let partials: Vec<(C64, f64, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut sum = C64::new(0.0, 0.0);
            let mut sum_sq = 0.0;
            for _ in 0..count {
                let mut z = Vector2::new(from.p, from.q);
                let target = Vector2::new(to.p, to.q);
                let mut phase = 0.0;
                for k in 0..n {
                    let remaining = (n - k) as f64;
                    let drift = (target - z) / remaining;
                    let scale = ((remaining - 1.0) / remaining).sqrt();
                    let xi = Vector2::new(normal(&mut rng), normal(&mut rng));
                    let step = drift + l * xi * scale;
                    let pbar = z[0] + 0.5 * step[0];
                    let qbar = z[1] + 0.5 * step[1];
                    phase += pbar * step[1];
                    if let Some(terms) = &h_terms {
                        let mut hv = 0.0;
                        for &((i, j), c) in terms {
                            hv += c.re * pbar.powi(i as i32) * qbar.powi(j as i32);
                        }
                        phase -= eps * hv;
                    }
                    z += step;
                }
                let w = C64::from_polar(1.0, phase);
                sum += w;
                sum_sq += w.norm_sqr();
            }
            (sum, sum_sq, count)
        })
        .collect();

    let mut sum = C64::new(0.0, 0.0);
    let mut sum_sq = 0.0;
    let mut count = 0u64;
    for (s, ss, c) in partials {
        sum += s;
        sum_sq += ss;
        count += c;
    }
    let mean = sum / count as f64;
    let var = (sum_sq - mean.norm_sqr() * count as f64) / (count as f64 - 1.0);
    let stderr_mean = (var / count as f64).max(0.0).sqrt();

    // 2 pi e^(nu T / 2) times the pinned-endpoint density of the improved
    // walk (total variance n * step_var per normalized coordinate).
    let dz = Vector2::new(to.p - from.p, to.q - from.q);
    let quad = metric.g_pp * dz[0] * dz[0]
        + 2.0 * metric.g_pq * dz[0] * dz[1]
        + metric.g_qq * dz[1] * dz[1];
    let total_var = n as f64 * step_var;
    let log_norm = 0.5 * spec.nu * spec.t_total + 0.5 * det.ln() - total_var.ln()
        - quad / (2.0 * total_var)
        + log_counterterm;
    let prefactor = log_norm.exp();

    let value = mean * prefactor;
    let stderr = stderr_mean * prefactor;
    Ok(KernelEstimate {
        value,
        stderr,
        backend: Backend::MonteCarlo,
        spec: *spec,
        samples: Some(samples),
        seed: Some(seed),
        quality_warning: stderr > value.norm(),
    })
}

/// Monte Carlo estimate of the half-plane kernel with the constant
/// negative curvature metric q^2 dp^2 / beta + beta dq^2 / q^2, q > 0.
///
/// Radial steps are proposed as a Brownian bridge in u = ln q (constant
/// variance nu eps / beta) and reweighted to the midpoint-metric density;
/// the Jacobian of dq = q du cancels against the metric normalization up
/// to a product of cosh(du/2) factors. The p-path is then drawn exactly
/// from its pinned Gaussian law conditional on the radial path, whose
/// step variances are nu eps beta / qbar^2. The prefactor is
/// 2 pi (1 - 1/2 beta) e^(nu T/2). q > 0 holds exactly along every path.
pub fn mc_kernel_halfplane(
    spec: &LatticeSpec,
    beta: f64,
    to: PhasePoint,
    from: PhasePoint,
    h: Option<&SymbolPoly>,
    samples: u64,
    seed: u64,
) -> PropagationResult<KernelEstimate> {
    if !(beta > 0.5) {
        return Err(PropagationError::InvalidSpec("half-plane metric needs beta > 1/2"));
    }
    if to.q <= 0.0 || from.q <= 0.0 {
        return Err(PropagationError::InvalidSpec("half-plane labels need q > 0"));
    }
    if samples < 1000 {
        return Err(PropagationError::InvalidSpec("need at least 1000 samples"));
    }
    let n = spec.n_steps;
    let eps = spec.epsilon();
    let nu_eps = spec.nu * eps;
    let var_u = nu_eps / beta;

    let h_terms: Option<Vec<((u32, u32), C64)>> =
        h.map(|h| h.terms().map(|(&k, &c)| (k, c)).collect());

    let u_from = from.q.ln();
    let u_to = to.q.ln();

    let n_chunks = samples.div_ceil(CHUNK);
    let partials: Vec<(C64, f64, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut sum = C64::new(0.0, 0.0);
            let mut sum_sq = 0.0;
            let mut qs = vec![0.0_f64; n + 1];
            let mut vs = vec![0.0_f64; n];
            for _ in 0..count {
                // Radial bridge in u = ln q.
                let mut u = u_from;
                qs[0] = from.q;
                let mut log_w = 0.0;
                for k in 0..n {
                    let remaining = (n - k) as f64;
                    let du = if k + 1 == n {
                        u_to - u
                    } else {
                        (u_to - u) / remaining
                            + (var_u * (remaining - 1.0) / remaining).sqrt() * normal(&mut rng)
                    };
                    // weight: exact metric factor vs Gaussian proposal
                    let t = (0.5 * du).tanh();
                    log_w += (beta / (2.0 * nu_eps)) * (du * du - 4.0 * t * t);
                    log_w -= (0.5 * du).cosh().ln();
                    u += du;
                    qs[k + 1] = u.exp();
                }
                log_w -= 0.5 * (from.q * to.q).ln();

                // Conditional p-path: pinned Gaussian with step variances
                // nu eps beta / qbar^2 from the sampled radial path.
                let mut v_total = 0.0;
                for k in 0..n {
                    let qbar = 0.5 * (qs[k] + qs[k + 1]);
                    vs[k] = nu_eps * beta / (qbar * qbar);
                    v_total += vs[k];
                }
                let mut p = from.p;
                let mut remaining_var = v_total;
                let mut phase = 0.0;
                for k in 0..n {
                    let vk = vs[k];
                    let dp = if k + 1 == n {
                        to.p - p
                    } else {
                        let mean = vk / remaining_var * (to.p - p);
                        let var = vk * (remaining_var - vk) / remaining_var;
                        mean + var.sqrt() * normal(&mut rng)
                    };
                    let pbar = p + 0.5 * dp;
                    let qbar = 0.5 * (qs[k] + qs[k + 1]);
                    let dq = qs[k + 1] - qs[k];
                    phase += pbar * dq;
                    if let Some(terms) = &h_terms {
                        let mut hv = 0.0;
                        for &((i, j), c) in terms {
                            hv += c.re * pbar.powi(i as i32) * qbar.powi(j as i32);
                        }
                        phase -= eps * hv;
                    }
                    p += dp;
                    remaining_var -= vk;
                }

                // Pinned density of the conditional p-path.
                let dp_total = to.p - from.p;
                let rho_p = (-dp_total * dp_total / (2.0 * v_total)).exp()
                    / (2.0 * std::f64::consts::PI * v_total).sqrt();

                let w = C64::from_polar(log_w.exp() * rho_p, phase);
                sum += w;
                sum_sq += w.norm_sqr();
            }
            (sum, sum_sq, count)
        })
        .collect();

    let mut sum = C64::new(0.0, 0.0);
    let mut sum_sq = 0.0;
    let mut count = 0u64;
    for (s, ss, c) in partials {
        sum += s;
        sum_sq += ss;
        count += c;
    }
    let mean = sum / count as f64;
    let var = (sum_sq - mean.norm_sqr() * count as f64) / (count as f64 - 1.0);
    let stderr_mean = (var / count as f64).max(0.0).sqrt();

    // Pinned radial density times the half-plane prefactor.
    let du_total = u_to - u_from;
    let var_u_total = spec.nu * spec.t_total / beta;
    let rho_u = (-du_total * du_total / (2.0 * var_u_total)).exp()
        / (2.0 * std::f64::consts::PI * var_u_total).sqrt();
    let prefactor = 2.0 * std::f64::consts::PI
        * (1.0 - 0.5 / beta)
        * (0.5 * spec.nu * spec.t_total).exp()
        * rho_u;

    let value = mean * prefactor;
    let stderr = stderr_mean * prefactor;
    Ok(KernelEstimate {
        value,
        stderr,
        backend: Backend::MonteCarlo,
        spec: *spec,
        samples: Some(samples),
        seed: Some(seed),
        quality_warning: stderr > value.norm(),
    })
}
