//! Numerical phase-space quantization with coherent states.
//!
//! The crate is organized around a truncated Fock-space oracle layer and a
//! set of phase-space machines built on top of it:
//!
//! - [`fock`]: ladder-operator matrices, matrix exponentials, spectral
//!   projectors. Everything downstream is checked against this layer.
//! - [`coherent`]: canonical (Weyl) and affine coherent-state families,
//!   overlaps, and resolution-of-unity quadrature.
//! - [`symbols`]: upper/lower symbol calculus between operators and
//!   phase-space polynomials.
//! - [`propagation`]: the diffusion-regularized phase-space kernel K^nu
//!   computed by three independent backends (exact Gaussian chains, a grid
//!   semigroup, Monte Carlo over pinned Brownian bridges), plus the
//!   Fock-space propagator oracle and nu -> infinity extrapolation.
//! - [`transforms`]: canonical coordinate transformations under the
//!   midpoint rule and covariance checks of the kernel.
//! - [`constraints`]: projection-operator quantization of constrained
//!   systems.
//!
//! Conventions used repository-wide: hbar = 1, a = (Q + iP)/sqrt(2),
//! alpha = (q + ip)/sqrt(2), and the phase-space measure dp dq / 2pi.

pub mod constraints;
pub mod coherent;
pub mod fock;
pub mod propagation;
pub mod quad;
pub mod symbols;
pub mod transforms;

pub use num_complex::Complex64;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
