//! Operator / phase-space symbol calculus.
//!
//! Two symbols are attached to an operator H(P, Q):
//!
//! - the upper symbol H(p,q) = <p,q|H|p,q>, a smoothed expectation, and
//! - the lower symbol h(p,q), the density representing H as an integral of
//!   coherent projectors, H = int h(p,q) |p,q><p,q| dp dq / 2pi.
//!
//! For polynomials in the ladder operators the lower symbol is exact:
//! reorder to anti-normal form (all a factors left of all a^dag factors)
//! with [a, a^dag] = 1 and substitute a -> alpha, a^dag -> conj(alpha)
//! with the repository-wide convention alpha = (q + ip)/sqrt(2).
//!
//! The two symbols are related by Gaussian smoothing,
//! upper = exp[(1/2)(d^2/dp^2 + d^2/dq^2)] lower, which on polynomials is
//! the finite series implemented by [`heat_smooth`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::coherent::{CanonicalFamily, CoherentError, PhasePoint};
use crate::fock::OperatorSet;
use crate::quad::PlaneQuad;

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error(transparent)]
    Coherent(#[from] CoherentError),

    #[error("quadrature window does not contain the symbol mass: ring fraction {0:.3e}")]
    Domain(f64),

    #[error("ridge-regularized inversion failed: {0}")]
    Inversion(&'static str),
}

pub type SymbolResult<T> = Result<T, SymbolError>;

/// Factor ordering of a ladder polynomial term with key (m, n):
/// `Normal` stores a^dag^m a^n, `AntiNormal` stores a^n a^dag^m.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderOrdering {
    Normal,
    AntiNormal,
}

/// A polynomial in the ladder operators with a definite factor ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderPoly {
    coeffs: BTreeMap<(u32, u32), C64>,
    ordering: LadderOrdering,
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl LadderPoly {
    pub fn zero(ordering: LadderOrdering) -> Self {
        Self { coeffs: BTreeMap::new(), ordering }
    }

    pub fn identity() -> Self {
        Self::monomial(0, 0, C64::new(1.0, 0.0))
    }

    /// c * a^dag^m a^n in normal ordering.
    pub fn monomial(m: u32, n: u32, c: C64) -> Self {
        let mut coeffs = BTreeMap::new();
        if c != C64::new(0.0, 0.0) {
            coeffs.insert((m, n), c);
        }
        Self { coeffs, ordering: LadderOrdering::Normal }
    }

    pub fn lowering() -> Self {
        Self::monomial(0, 1, C64::new(1.0, 0.0))
    }

    pub fn raising() -> Self {
        Self::monomial(1, 0, C64::new(1.0, 0.0))
    }

    /// Q = (a + a^dag)/sqrt(2).
    pub fn position() -> Self {
        let s = C64::new(1.0 / 2.0_f64.sqrt(), 0.0);
        Self::lowering().scaled(s).plus(&Self::raising().scaled(s))
    }

    /// P = (a - a^dag)/(i sqrt(2)).
    pub fn momentum() -> Self {
        let s = C64::new(0.0, -1.0 / 2.0_f64.sqrt());
        Self::lowering().scaled(s).plus(&Self::raising().scaled(-s))
    }

    /// a^dag a.
    pub fn number() -> Self {
        Self::monomial(1, 1, C64::new(1.0, 0.0))
    }

    pub fn ordering(&self) -> LadderOrdering {
        self.ordering
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &C64)> {
        self.coeffs.iter()
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|&(m, n)| m + n).max().unwrap_or(0)
    }

    fn insert(&mut self, key: (u32, u32), c: C64) {
        let entry = self.coeffs.entry(key).or_insert(C64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() == 0.0 {
            self.coeffs.remove(&key);
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = Self::zero(self.ordering);
        for (&k, &c) in &self.coeffs {
            out.insert(k, c * s);
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        assert_eq!(self.ordering, other.ordering, "mixed orderings in sum");
        let mut out = self.clone();
        for (&k, &c) in &other.coeffs {
            out.insert(k, c);
        }
        out
    }

    /// Product of two normal-ordered polynomials, renormal-ordered with
    /// a^n a^dag^m = sum_k k! C(m,k) C(n,k) a^dag^(m-k) a^(n-k).
    pub fn times(&self, other: &Self) -> Self {
        assert_eq!(self.ordering, LadderOrdering::Normal);
        assert_eq!(other.ordering, LadderOrdering::Normal);
        let mut out = Self::zero(LadderOrdering::Normal);
        for (&(m1, n1), &c1) in &self.coeffs {
            for (&(m2, n2), &c2) in &other.coeffs {
                let kmax = n1.min(m2);
                for k in 0..=kmax {
                    let w = factorial(k) * binomial(m2, k) * binomial(n1, k);
                    out.insert((m1 + m2 - k, n1 + n2 - k), c1 * c2 * C64::new(w, 0.0));
                }
            }
        }
        out
    }

    pub fn power(&self, e: u32) -> Self {
        let mut out = Self::identity();
        for _ in 0..e {
            out = out.times(self);
        }
        out
    }

    /// Reorder into anti-normal form using
    /// a^dag^m a^n = sum_k (-1)^k k! C(m,k) C(n,k) a^(n-k) a^dag^(m-k).
    pub fn anti_normal_ordered(&self) -> Self {
        match self.ordering {
            LadderOrdering::AntiNormal => self.clone(),
            LadderOrdering::Normal => {
                let mut out = Self::zero(LadderOrdering::AntiNormal);
                for (&(m, n), &c) in &self.coeffs {
                    for k in 0..=m.min(n) {
                        let w = factorial(k) * binomial(m, k) * binomial(n, k);
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        out.insert((m - k, n - k), c * C64::new(sign * w, 0.0));
                    }
                }
                out
            }
        }
    }

    /// Reorder into normal form using
    /// a^n a^dag^m = sum_k k! C(m,k) C(n,k) a^dag^(m-k) a^(n-k).
    pub fn normal_ordered(&self) -> Self {
        match self.ordering {
            LadderOrdering::Normal => self.clone(),
            LadderOrdering::AntiNormal => {
                let mut out = Self::zero(LadderOrdering::Normal);
                for (&(m, n), &c) in &self.coeffs {
                    for k in 0..=m.min(n) {
                        let w = factorial(k) * binomial(m, k) * binomial(n, k);
                        out.insert((m - k, n - k), c * C64::new(w, 0.0));
                    }
                }
                out
            }
        }
    }

    /// Hermitian conjugate; the ordering class is preserved.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.ordering);
        for (&(m, n), &c) in &self.coeffs {
            out.insert((n, m), c.conj());
        }
        out
    }

    /// Dense matrix on a d-dimensional truncation.
    pub fn to_matrix(&self, ops: &OperatorSet) -> DMatrix<C64> {
        let d = ops.dim();
        let mut powers_a = vec![DMatrix::<C64>::identity(d, d)];
        let mut powers_ad = vec![DMatrix::<C64>::identity(d, d)];
        let deg = self.degree() as usize;
        for k in 1..=deg {
            powers_a.push(&powers_a[k - 1] * ops.a());
            powers_ad.push(&powers_ad[k - 1] * ops.a_dag());
        }
        let mut out = DMatrix::<C64>::zeros(d, d);
        for (&(m, n), &c) in &self.coeffs {
            let term = match self.ordering {
                LadderOrdering::Normal => &powers_ad[m as usize] * &powers_a[n as usize],
                LadderOrdering::AntiNormal => &powers_a[n as usize] * &powers_ad[m as usize],
            };
            out += term * c;
        }
        out
    }
}

/// Which side of the symbol correspondence a polynomial lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Upper,
    Lower,
    Classical,
}

/// A polynomial in (p, q) with complex coefficients, keyed by
/// (power of p, power of q).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPoly {
    coeffs: BTreeMap<(u32, u32), C64>,
    pub kind: SymbolKind,
}

impl SymbolPoly {
    pub fn zero(kind: SymbolKind) -> Self {
        Self { coeffs: BTreeMap::new(), kind }
    }

    pub fn constant(c: C64, kind: SymbolKind) -> Self {
        let mut out = Self::zero(kind);
        out.insert((0, 0), c);
        out
    }

    pub fn monomial(p_pow: u32, q_pow: u32, c: C64, kind: SymbolKind) -> Self {
        let mut out = Self::zero(kind);
        out.insert((p_pow, q_pow), c);
        out
    }

    fn insert(&mut self, key: (u32, u32), c: C64) {
        let entry = self.coeffs.entry(key).or_insert(C64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() == 0.0 {
            self.coeffs.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &C64)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, p_pow: u32, q_pow: u32) -> C64 {
        self.coeffs.get(&(p_pow, q_pow)).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|&(i, j)| i + j).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&k, &c) in &other.coeffs {
            out.insert(k, c);
        }
        out
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = Self::zero(self.kind);
        for (&k, &c) in &self.coeffs {
            out.insert(k, c * s);
        }
        out
    }

    pub fn times(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.kind);
        for (&(i1, j1), &c1) in &self.coeffs {
            for (&(i2, j2), &c2) in &other.coeffs {
                out.insert((i1 + i2, j1 + j2), c1 * c2);
            }
        }
        out
    }

    pub fn eval(&self, pt: PhasePoint) -> C64 {
        let mut out = C64::new(0.0, 0.0);
        for (&(i, j), &c) in &self.coeffs {
            out += c * C64::new(pt.p.powi(i as i32) * pt.q.powi(j as i32), 0.0);
        }
        out
    }

    /// Largest imaginary part over all coefficients; hermitian operators
    /// produce symbols with real coefficients.
    pub fn max_imag_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    /// d^2/dp^2 + d^2/dq^2.
    pub fn laplacian(&self) -> Self {
        let mut out = Self::zero(self.kind);
        for (&(i, j), &c) in &self.coeffs {
            if i >= 2 {
                out.insert((i - 2, j), c * C64::new((i * (i - 1)) as f64, 0.0));
            }
            if j >= 2 {
                out.insert((i, j - 2), c * C64::new((j * (j - 1)) as f64, 0.0));
            }
        }
        out
    }
}

/// Lower symbol of a ladder polynomial: anti-normal order, then substitute
/// a -> alpha, a^dag -> conj(alpha) with alpha = (q + ip)/sqrt(2).
pub fn lower_symbol_poly(h: &LadderPoly) -> SymbolPoly {
    let an = h.anti_normal_ordered();
    let s = 1.0 / 2.0_f64.sqrt();
    let alpha = SymbolPoly::monomial(1, 0, C64::new(0.0, s), SymbolKind::Lower)
        .plus(&SymbolPoly::monomial(0, 1, C64::new(s, 0.0), SymbolKind::Lower));
    let alpha_bar = SymbolPoly::monomial(1, 0, C64::new(0.0, -s), SymbolKind::Lower)
        .plus(&SymbolPoly::monomial(0, 1, C64::new(s, 0.0), SymbolKind::Lower));
    let mut out = SymbolPoly::zero(SymbolKind::Lower);
    for (&(m, n), &c) in an.terms() {
        let mut term = SymbolPoly::constant(c, SymbolKind::Lower);
        for _ in 0..m {
            term = term.times(&alpha_bar);
        }
        for _ in 0..n {
            term = term.times(&alpha);
        }
        out = out.plus(&term);
    }
    out
}

/// Upper symbol <p,q|H|p,q> evaluated through the coherent family.
pub fn upper_symbol(
    h: &DMatrix<C64>,
    pt: PhasePoint,
    family: &CanonicalFamily,
) -> SymbolResult<C64> {
    let v = family.coherent_vector(pt)?;
    Ok((h * &v.0).dotc(&v.0).conj())
}

/// Gaussian smoothing exp[(1/2)(d^2/dp^2 + d^2/dq^2)] as a finite series;
/// maps the lower symbol of a polynomial operator to its upper symbol.
pub fn heat_smooth(h: &SymbolPoly) -> SymbolPoly {
    let mut out = SymbolPoly::zero(SymbolKind::Upper);
    let mut term = h.clone();
    let mut k = 0u32;
    while !term.is_zero() {
        out = out.plus(&term);
        k += 1;
        term = term.laplacian().scaled(C64::new(0.5 / k as f64, 0.0));
    }
    out.kind = SymbolKind::Upper;
    out
}

/// sum_i w_i h(p_i, q_i) |v_i><v_i| / (2 pi) over the quadrature window.
///
/// For a lower symbol produced by [`lower_symbol_poly`] this reassembles
/// the original operator on the low-lying Fock block. Errors when the
/// outermost ring of quadrature cells still carries a non-negligible
/// fraction of the accumulated operator (window too small).
pub fn reconstruct_operator(
    h: &SymbolPoly,
    quad: &PlaneQuad,
    family: &CanonicalFamily,
) -> SymbolResult<DMatrix<C64>> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let out =
        family.weighted_projector_sum(quad, |p, q| h.eval(PhasePoint::new(p, q)) / two_pi);
    // Window check on the targeted low-lying block (n <= d/4): the
    // boundary ring of cells must not contribute materially there. Every
    // projector has unit trace, but a converged window parks that mass far
    // up the ladder where the reconstruction contract does not look.
    let n = quad.cells_per_axis();
    let ring = family
        .weighted_projector_sum_filtered(quad, |i, j| i == 0 || j == 0 || i == n - 1 || j == n - 1);
    let m = (family.dim() / 4).max(1);
    let edge = quad.extent - 0.5 * quad.spacing;
    let h_edge = h
        .eval(PhasePoint::new(edge, edge))
        .norm()
        .max(h.eval(PhasePoint::new(edge, 0.0)).norm());
    let ring_weight = ring
        .view((0, 0), (m, m))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        * h_edge
        / two_pi;
    let scale = out.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if ring_weight > 1e-8 * scale {
        return Err(SymbolError::Domain(ring_weight / scale));
    }
    Ok(out)
}

/// Reconstruction from raw grid samples (one value per quadrature node, in
/// the row-major order of [`PlaneQuad::nodes`]).
pub fn reconstruct_from_samples(
    samples: &[C64],
    quad: &PlaneQuad,
    family: &CanonicalFamily,
) -> SymbolResult<DMatrix<C64>> {
    let n = quad.cells_per_axis();
    assert_eq!(samples.len(), n * n, "one sample per quadrature node");
    let two_pi = 2.0 * std::f64::consts::PI;
    let out = family.weighted_projector_sum(quad, |p, q| {
        let i = ((p + quad.extent) / quad.spacing - 0.5).round() as usize;
        let j = ((q + quad.extent) / quad.spacing - 0.5).round() as usize;
        samples[i * n + j] / two_pi
    });
    Ok(out)
}

/// Grid-sampled lower symbol of an arbitrary operator by ridge-regularized
/// least squares on the reconstruction identity.
///
/// The inverse of Gaussian smoothing is unbounded, so this problem is
/// ill-conditioned by nature; the ridge keeps it solvable and biases the
/// answer toward small symbols. Polynomial operators should use
/// [`lower_symbol_poly`] instead. Returns samples in the node order of
/// [`PlaneQuad::nodes`].
pub fn lower_symbol_grid(
    h: &DMatrix<C64>,
    quad: &PlaneQuad,
    ridge: f64,
    family: &CanonicalFamily,
) -> SymbolResult<Vec<C64>> {
    let nodes = quad.nodes();
    let npts = nodes.len();
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = quad.weight() / two_pi;

    // Normal equations in closed form: the kernel is |<v_i|v_j>|^2 and the
    // data projection is the upper symbol at each node.
    let vs: Vec<crate::fock::FockVector> = nodes
        .iter()
        .map(|&(p, q)| {
            let mut v = DVector::zeros(family.dim());
            family.quadrature_state(PhasePoint::new(p, q), &mut v);
            crate::fock::FockVector(v)
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(npts, npts);
    for i in 0..npts {
        for j in i..npts {
            let o = vs[i].inner(&vs[j]).norm_sqr() * w * w;
            gram[(i, j)] = o;
            gram[(j, i)] = o;
        }
        gram[(i, i)] += ridge;
    }
    let rhs: Vec<C64> = vs.iter().map(|v| (h * &v.0).dotc(&v.0).conj() * w).collect();
    let re = DVector::from_iterator(npts, rhs.iter().map(|z| z.re));
    let im = DVector::from_iterator(npts, rhs.iter().map(|z| z.im));
    let chol = gram
        .cholesky()
        .ok_or(SymbolError::Inversion("normal equations not positive definite"))?;
    let sol_re = chol.solve(&re);
    let sol_im = chol.solve(&im);
    Ok((0..npts).map(|i| C64::new(sol_re[i], sol_im[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn reordering_matches_matrix_oracle() {
        let ops = OperatorSet::new(24).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..10 {
            let mut poly = LadderPoly::zero(LadderOrdering::Normal);
            for _ in 0..4 {
                let m = rng.random_range(0..3u32);
                let n = rng.random_range(0..3u32);
                let c = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                poly = poly.plus(&LadderPoly::monomial(m, n, c));
            }
            let direct = poly.to_matrix(&ops);
            let via_anti = poly.anti_normal_ordered().to_matrix(&ops);
            let round_trip = poly.anti_normal_ordered().normal_ordered().to_matrix(&ops);
            // Orderings agree on the block untouched by truncation.
            let deg = poly.degree() as usize;
            let keep = 24 - deg.max(1);
            let diff = (&direct - &via_anti).view((0, 0), (keep, keep)).into_owned();
            assert!(max_abs(&diff) <= 1e-12, "anti-normal mismatch {}", max_abs(&diff));
            let diff2 = (&direct - &round_trip).view((0, 0), (keep, keep)).into_owned();
            assert!(max_abs(&diff2) <= 1e-12);
        }
    }

    #[test]
    fn product_reordering_reproduces_matrix_product() {
        let ops = OperatorSet::new(20).unwrap();
        let q2 = LadderPoly::position().power(2);
        let expect = ops.q() * ops.q();
        let got = q2.to_matrix(&ops);
        let diff = (&expect - &got).view((0, 0), (17, 17)).into_owned();
        assert!(max_abs(&diff) <= 1e-13);
    }

    #[test]
    fn lower_symbol_of_identity_is_one() {
        let h = lower_symbol_poly(&LadderPoly::identity());
        assert_eq!(h.degree(), 0);
        assert_abs_diff_eq!(h.coeff(0, 0).re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn lower_symbol_of_number_operator() {
        let h = lower_symbol_poly(&LadderPoly::number());
        // (p^2 + q^2)/2 - 1
        assert_abs_diff_eq!(h.coeff(2, 0).re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(h.coeff(0, 2).re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(h.coeff(0, 0).re, -1.0, epsilon = 1e-14);
        assert!(h.coeff(1, 1).norm() <= 1e-15);
        assert!(h.max_imag_coeff() <= 1e-14);
    }

    #[test]
    fn lower_symbol_of_position_squared() {
        let h = lower_symbol_poly(&LadderPoly::position().power(2));
        // q^2 - 1/2, fixed by the anti-normal reorder.
        assert_abs_diff_eq!(h.coeff(0, 2).re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h.coeff(0, 0).re, -0.5, epsilon = 1e-14);
        assert!(h.coeff(2, 0).norm() <= 1e-15);
    }

    #[test]
    fn symbol_maps_are_linear_and_real_for_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..5 {
            let c = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let x = LadderPoly::position().power(2);
            let y = LadderPoly::number();
            let combo = x.scaled(c).plus(&y);
            let lhs = lower_symbol_poly(&combo);
            let rhs = lower_symbol_poly(&x).scaled(c).plus(&lower_symbol_poly(&y));
            let diff = lhs.plus(&rhs.scaled(C64::new(-1.0, 0.0)));
            let worst = diff.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max);
            assert!(worst <= 1e-12);
        }
        // hermitian => real coefficients
        let herm = LadderPoly::position().power(4).plus(&LadderPoly::number());
        assert!(lower_symbol_poly(&herm).max_imag_coeff() <= 1e-12);
    }

    #[test]
    fn upper_symbol_of_identity_and_number() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let id = fam.ops().identity();
        let num = fam.ops().number();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..10 {
            let pt = PhasePoint::new(
                4.0 * rng.random::<f64>() - 2.0,
                4.0 * rng.random::<f64>() - 2.0,
            );
            let u_id = upper_symbol(&id, pt, &fam).unwrap();
            assert!((u_id - C64::new(1.0, 0.0)).norm() <= 1e-10);
            let u_num = upper_symbol(&num, pt, &fam).unwrap();
            let expect = 0.5 * (pt.p * pt.p + pt.q * pt.q);
            assert!((u_num - C64::new(expect, 0.0)).norm() <= 1e-8);
            assert!(u_num.im.abs() <= 1e-10);
        }
    }

    #[test]
    fn upper_symbol_of_position_reads_the_label() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let got = upper_symbol(fam.ops().q(), PhasePoint::new(0.0, 3.0), &fam).unwrap();
        assert!((got - C64::new(3.0, 0.0)).norm() <= 1e-8);
    }

    #[test]
    fn heat_smoothing_reference_cases() {
        let one = SymbolPoly::constant(C64::new(1.0, 0.0), SymbolKind::Lower);
        let sm = heat_smooth(&one);
        assert_abs_diff_eq!(sm.coeff(0, 0).re, 1.0, epsilon = 1e-15);
        assert_eq!(sm.degree(), 0);

        let q = SymbolPoly::monomial(0, 1, C64::new(1.0, 0.0), SymbolKind::Lower);
        let sm = heat_smooth(&q);
        assert_abs_diff_eq!(sm.coeff(0, 1).re, 1.0, epsilon = 1e-15);
        assert_eq!(sm.degree(), 1);

        let lower_num = lower_symbol_poly(&LadderPoly::number());
        let sm = heat_smooth(&lower_num);
        // (p^2+q^2)/2 - 1 + 1 = (p^2+q^2)/2
        assert_abs_diff_eq!(sm.coeff(2, 0).re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(sm.coeff(0, 2).re, 0.5, epsilon = 1e-14);
        assert!(sm.coeff(0, 0).norm() <= 1e-14);
    }

    #[test]
    fn heat_smoothing_degree_four_case() {
        // a^dag^2 a^2: lower u^2 - 4u + 2, upper u^2, with u = (p^2+q^2)/2.
        let h = lower_symbol_poly(&LadderPoly::monomial(2, 2, C64::new(1.0, 0.0)));
        let sm = heat_smooth(&h);
        assert_abs_diff_eq!(sm.coeff(4, 0).re, 0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(sm.coeff(0, 4).re, 0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(sm.coeff(2, 2).re, 0.5, epsilon = 1e-13);
        assert!(sm.coeff(2, 0).norm() <= 1e-13);
        assert!(sm.coeff(0, 2).norm() <= 1e-13);
        assert!(sm.coeff(0, 0).norm() <= 1e-13);
    }

    #[test]
    fn smoothing_bridges_lower_to_upper_symbol() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let polys = [
            LadderPoly::number(),
            LadderPoly::position().power(2),
            LadderPoly::momentum(),
            LadderPoly::position().times(&LadderPoly::momentum()),
        ];
        let pts = [
            PhasePoint::new(0.0, 0.0),
            PhasePoint::new(1.0, -0.5),
            PhasePoint::new(-1.5, 2.0),
        ];
        for poly in &polys {
            let smoothed = heat_smooth(&lower_symbol_poly(poly));
            let mat = poly.to_matrix(fam.ops());
            for &pt in &pts {
                let via_matrix = upper_symbol(&mat, pt, &fam).unwrap();
                let via_smooth = smoothed.eval(pt);
                assert!(
                    (via_matrix - via_smooth).norm() <= 1e-8,
                    "{via_matrix} vs {via_smooth}"
                );
            }
        }
    }

    fn reconstruction_quad() -> PlaneQuad {
        PlaneQuad::new(12.0, 0.05)
    }

    #[test]
    fn reconstruct_unit_symbol_gives_identity_block() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let h = SymbolPoly::constant(C64::new(1.0, 0.0), SymbolKind::Lower);
        let got = reconstruct_operator(&h, &reconstruction_quad(), &fam).unwrap();
        let mut block = got.view((0, 0), (11, 11)).into_owned();
        for k in 0..11 {
            block[(k, k)] -= C64::new(1.0, 0.0);
        }
        assert!(max_abs(&block) <= 1e-6, "defect {}", max_abs(&block));
    }

    #[test]
    fn reconstruct_number_operator_from_lower_symbol() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let h = lower_symbol_poly(&LadderPoly::number());
        let got = reconstruct_operator(&h, &reconstruction_quad(), &fam).unwrap();
        let expect = fam.ops().number();
        let diff = (&got - &expect).view((0, 0), (11, 11)).into_owned();
        assert!(max_abs(&diff) <= 1e-6, "defect {}", max_abs(&diff));
    }

    #[test]
    fn reconstruct_linear_momentum_symbol() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let h = SymbolPoly::monomial(1, 0, C64::new(1.0, 0.0), SymbolKind::Lower);
        let got = reconstruct_operator(&h, &reconstruction_quad(), &fam).unwrap();
        let diff = (&got - fam.ops().p()).view((0, 0), (11, 11)).into_owned();
        assert!(max_abs(&diff) <= 1e-6, "defect {}", max_abs(&diff));
    }

    #[test]
    fn reconstruct_flags_too_small_window() {
        let fam = CanonicalFamily::vacuum(32).unwrap();
        let h = lower_symbol_poly(&LadderPoly::monomial(2, 2, C64::new(1.0, 0.0)));
        let res = reconstruct_operator(&h, &PlaneQuad::new(3.0, 0.05), &fam);
        assert!(matches!(res, Err(SymbolError::Domain(_))));
    }

    #[test]
    fn reconstruct_from_samples_matches_polynomial_path() {
        let fam = CanonicalFamily::vacuum(32).unwrap();
        let quad = PlaneQuad::new(9.0, 0.1);
        let h = lower_symbol_poly(&LadderPoly::number());
        let samples: Vec<C64> = quad
            .nodes()
            .iter()
            .map(|&(p, q)| h.eval(PhasePoint::new(p, q)))
            .collect();
        let a = reconstruct_operator(&h, &quad, &fam).unwrap();
        let b = reconstruct_from_samples(&samples, &quad, &fam).unwrap();
        assert!(max_abs(&(a - b)) <= 1e-12);
    }

    #[test]
    fn grid_inversion_round_trips_through_reconstruction() {
        // Coarse grid: the inversion is ill-conditioned by design, so the
        // test is the round trip it actually minimizes, on a small block.
        let fam = CanonicalFamily::vacuum(24).unwrap();
        let quad = PlaneQuad::new(7.0, 0.35);
        let target = fam.ops().number();
        let samples = lower_symbol_grid(&target, &quad, 1e-8, &fam).unwrap();
        let rec = reconstruct_from_samples(&samples, &quad, &fam).unwrap();
        let diff = (&rec - &target).view((0, 0), (6, 6)).into_owned();
        assert!(max_abs(&diff) <= 5e-3, "round-trip defect {}", max_abs(&diff));
    }

    #[test]
    fn upper_symbol_truncation_error_propagates() {
        let fam = CanonicalFamily::vacuum(16).unwrap();
        let res = upper_symbol(&fam.ops().number(), PhasePoint::new(5.0, 5.0), &fam);
        assert!(matches!(res, Err(SymbolError::Coherent(CoherentError::Truncation { .. }))));
    }
}
