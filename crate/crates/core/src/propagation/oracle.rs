//! Fock-space propagator oracle and the regularized-propagator dispatch.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{
    dk_kernel_grid, kernel_nu, GridSpec2d, KernelEstimate, LatticeSpec, PropagationResult,
};
use crate::coherent::{CanonicalFamily, PhasePoint};
use crate::fock::exp_hermitian_scaled;
use crate::symbols::SymbolPoly;

/// <v(to)| exp(-i H T) |v(from)> on the truncated Fock space; the ground
/// truth every path-integral backend is checked against.
pub fn propagator_oracle(
    h: &DMatrix<C64>,
    t: f64,
    to: PhasePoint,
    from: PhasePoint,
    family: &CanonicalFamily,
) -> PropagationResult<C64> {
    let u = exp_hermitian_scaled(h, C64::new(0.0, -t))?;
    let va = family.coherent_vector(to)?;
    let vb = family.coherent_vector(from)?;
    Ok((u * &vb.0).dotc(&va.0).conj())
}

/// Regularized coherent-state propagator for the Hamiltonian with lower
/// symbol h: the Gaussian chain for quadratic h, the grid-splitting
/// backend otherwise. At large nu the value converges to
/// [`propagator_oracle`] of the operator h reconstructs.
pub fn dk_propagator(
    h: &SymbolPoly,
    spec: &LatticeSpec,
    to: PhasePoint,
    from: PhasePoint,
    grid: Option<GridSpec2d>,
) -> PropagationResult<KernelEstimate> {
    if h.is_zero() {
        return kernel_nu(spec, to, from, None);
    }
    if h.degree() <= 2 {
        return kernel_nu(spec, to, from, Some(h));
    }
    let grid = grid.unwrap_or_else(|| default_dk_grid(to, from));
    dk_kernel_grid(spec, grid, to, from, h)
}

/// Grid wide enough for the sources and the kernel width, with spacing
/// fine enough for the order-4 p-derivative at the default tolerances.
fn default_dk_grid(to: PhasePoint, from: PhasePoint) -> GridSpec2d {
    let reach = to
        .p
        .abs()
        .max(to.q.abs())
        .max(from.p.abs())
        .max(from.q.abs());
    let extent = (reach + 7.0).max(9.0);
    let n = (2.0 * extent / 0.075).round() as usize;
    GridSpec2d::new(extent, n.next_multiple_of(2))
}
