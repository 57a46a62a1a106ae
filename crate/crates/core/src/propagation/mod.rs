//! The diffusion-regularized phase-space kernel K^nu and its limits.
//!
//! The object computed here is the lattice path integral
//!
//!   K^nu(b; a) = 2 pi e^(nu T / 2) * [ N-step chain of
//!       exp(-[(dp)^2 + (dq)^2] / (2 nu eps)) / (2 pi nu eps)
//!       * exp(i pbar dq) * exp(-i eps h(pbar, qbar)) ]
//!
//! with all intermediate phase-space points integrated out and the
//! stochastic integral discretized by the midpoint rule,
//! sum (p_k+1 + p_k)(q_k+1 - q_k)/2. Three backends evaluate it:
//!
//! - [`gauss`]: every lattice integral done in closed form as a chain of
//!   Gaussian kernel compositions (exact for h absent or quadratic);
//! - [`grid`]: the generating semigroup discretized on a (p, q) grid,
//!   spectral in q and finite-difference in p;
//! - [`mc`]: Monte Carlo over pinned Brownian bridges.
//!
//! As nu -> infinity the kernel converges to the coherent-state overlap
//! (h absent) or to the coherent-state matrix element of exp(-iHT) where
//! H is the operator with lower symbol h; [`propagator_oracle`] provides
//! the Fock-space ground truth and [`nu_extrapolate`] the limit fit.

mod extrapolate;
mod gauss;
mod grid;
mod mc;
mod oracle;
mod schrodinger;

pub use extrapolate::{nu_extrapolate, NuFit};
pub use gauss::{kernel_nu, kernel_nu_form, kernel_nu_metric, GaussianKernelForm};
pub use grid::{dk_field_grid, dk_kernel_grid, sample_field, semigroup_grid, semigroup_kernel_value, GridField, GridSpec2d};
pub use mc::{mc_kernel, mc_kernel_halfplane, mc_kernel_metric};
pub use oracle::{dk_propagator, propagator_oracle};
pub use schrodinger::{field_from_state, field_norm_sq, schrodinger_cs_evolve, SplitHamiltonian};

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::coherent::CoherentError;
use crate::fock::FockError;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error(transparent)]
    Fock(#[from] FockError),

    #[error(transparent)]
    Coherent(#[from] CoherentError),

    #[error("lattice spec invalid: {0}")]
    InvalidSpec(&'static str),

    #[error(
        "intermediate Gaussian block not integrable: real part has eigenvalue {eigenvalue:.3e}"
    )]
    Composition { eigenvalue: f64 },

    #[error("Hamiltonian symbol of degree {0} exceeds the Gaussian-chain backend (use grid or MC)")]
    UnsupportedBackend(u32),

    #[error("grid under-resolves the evolution: {0}")]
    Resolution(&'static str),

    #[error("extrapolation needs at least 3 distinct nu values, got {0}")]
    TooFewPoints(usize),

    #[error("extrapolation fit rejected: {0}")]
    FitQuality(&'static str),

    #[error("phase-space metric must be positive definite")]
    BadMetric,
}

pub type PropagationResult<T> = Result<T, PropagationError>;

/// Diffusion and time-slicing parameters of the regularized path integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    /// Diffusion constant nu (1/time).
    pub nu: f64,
    /// Total time T.
    pub t_total: f64,
    /// Number of lattice steps N.
    pub n_steps: usize,
}

impl LatticeSpec {
    pub fn new(nu: f64, t_total: f64, n_steps: usize) -> PropagationResult<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(PropagationError::InvalidSpec("nu must be positive and finite"));
        }
        if !(t_total > 0.0 && t_total.is_finite()) {
            return Err(PropagationError::InvalidSpec("T must be positive and finite"));
        }
        if n_steps == 0 {
            return Err(PropagationError::InvalidSpec("need at least one lattice step"));
        }
        Ok(Self { nu, t_total, n_steps })
    }

    /// Lattice spacing eps = T / N.
    pub fn epsilon(&self) -> f64 {
        self.t_total / self.n_steps as f64
    }

    /// nu * eps > 1 puts a single step outside the diffusive regime.
    pub fn is_diffusive(&self) -> bool {
        self.nu * self.epsilon() <= 1.0
    }
}

/// Constant symmetric positive-definite metric weighting the increment
/// density, exp(-(dz)^T G (dz) / (2 nu eps)). The flat kernel uses the
/// identity; canonical coordinate changes induce other constant metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMetric {
    pub g_pp: f64,
    pub g_pq: f64,
    pub g_qq: f64,
}

impl PhaseMetric {
    pub fn flat() -> Self {
        Self { g_pp: 1.0, g_pq: 0.0, g_qq: 1.0 }
    }

    pub fn diagonal(g_p: f64, g_q: f64) -> Self {
        Self { g_pp: g_p, g_pq: 0.0, g_qq: g_q }
    }

    pub fn det(&self) -> f64 {
        self.g_pp * self.g_qq - self.g_pq * self.g_pq
    }

    pub fn validate(&self) -> PropagationResult<()> {
        if self.g_pp > 0.0 && self.det() > 0.0 {
            Ok(())
        } else {
            Err(PropagationError::BadMetric)
        }
    }
}

/// Which engine produced a kernel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    GaussChain,
    GridSemigroup,
    MonteCarlo,
    FockOracle,
}

/// A kernel value with its provenance and, for stochastic backends, the
/// statistical error.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub value: C64,
    /// One standard error of the estimate; 0 for deterministic backends.
    pub stderr: f64,
    pub backend: Backend,
    pub spec: LatticeSpec,
    /// Sample count and seed, for Monte Carlo estimates.
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    /// Set when stderr exceeds |value| (sign-problem regime); the estimate
    /// is still returned.
    pub quality_warning: bool,
}

impl KernelEstimate {
    pub fn deterministic(value: C64, backend: Backend, spec: LatticeSpec) -> Self {
        Self { value, stderr: 0.0, backend, spec, samples: None, seed: None, quality_warning: false }
    }
}
