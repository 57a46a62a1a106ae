//! Truncated Fock-space operator algebra.
//!
//! Builds the canonical operator matrices in the number basis and provides
//! the two dense-linear-algebra primitives the rest of the crate treats as
//! exact: matrix exponentials and spectral projectors.
//!
//! Truncation to dimension d corrupts operator identities only near the top
//! of the ladder: [Q,P] = i holds on the leading (d-1) block exactly, and
//! products of two ladder operators are exact on the leading (d-2) block.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Entrywise tolerance for accepting a matrix as hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Minimum distance between a projector threshold and the nearest
/// eigenvalue before the cutoff is declared ambiguous.
pub const CUTOFF_RESOLUTION: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("truncation dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not hermitian: max |H - H^dag| entry = {defect:.3e}")]
    NotHermitian { defect: f64 },

    #[error(
        "spectral cutoff {threshold:.6e} lies within {CUTOFF_RESOLUTION:.0e} of eigenvalue \
         {eigenvalue:.6e}; perturb the cutoff"
    )]
    AmbiguousCutoff { threshold: f64, eigenvalue: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

pub type FockResult<T> = Result<T, FockError>;

/// The canonical operator matrices on a d-dimensional number-basis
/// truncation, with a = (Q + iP)/sqrt(2) and D = (QP + PQ)/2.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    dim: usize,
    q: DMatrix<C64>,
    p: DMatrix<C64>,
    a: DMatrix<C64>,
    a_dag: DMatrix<C64>,
    d_op: DMatrix<C64>,
}

impl OperatorSet {
    /// Ladder construction: a has sqrt(n) on the first superdiagonal,
    /// Q = (a + a^dag)/sqrt(2), P = (a - a^dag)/(i sqrt(2)),
    /// D = (QP + PQ)/2.
    pub fn new(dim: usize) -> FockResult<Self> {
        if dim < 2 {
            return Err(FockError::DimensionTooSmall(dim));
        }
        let mut a = DMatrix::zeros(dim, dim);
        for n in 1..dim {
            a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        let a_dag = a.adjoint();
        let sqrt2 = C64::new(2.0_f64.sqrt(), 0.0);
        let q = (&a + &a_dag) / sqrt2;
        let p = (&a - &a_dag) / (C64::i() * sqrt2);
        let d_op = (&q * &p + &p * &q) * C64::new(0.5, 0.0);
        Ok(Self { dim, q, p, a, a_dag, d_op })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> &DMatrix<C64> {
        &self.q
    }

    pub fn p(&self) -> &DMatrix<C64> {
        &self.p
    }

    pub fn a(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn a_dag(&self) -> &DMatrix<C64> {
        &self.a_dag
    }

    /// Dilation generator D = (QP + PQ)/2.
    pub fn d_op(&self) -> &DMatrix<C64> {
        &self.d_op
    }

    /// Number operator, exactly diag(0..d-1). The matrix product a^dag a
    /// reproduces it only to rounding because sqrt(n)^2 is not exact in f64.
    pub fn number(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                C64::new(i as f64, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn identity(&self) -> DMatrix<C64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// A state vector in the number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector(pub DVector<C64>);

impl FockVector {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    /// The basis state |n>.
    pub fn basis_state(dim: usize, n: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[n] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn normalized(&self) -> Self {
        Self(self.0.clone() / C64::new(self.0.norm(), 0.0))
    }

    /// <self|other> with the conjugation on self.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.dotc(&other.0)
    }
}

/// Max entrywise |M - M^dag|.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// [A, B] = AB - BA.
pub fn commutator(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

fn check_finite(m: &DMatrix<C64>) -> FockResult<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(FockError::NonFinite)
    }
}

/// Eigendecomposition of a hermitian matrix: (eigenvalues ascending,
/// unitary of eigenvectors as columns).
pub fn hermitian_eigen(h: &DMatrix<C64>) -> FockResult<(Vec<f64>, DMatrix<C64>)> {
    check_finite(h)?;
    let defect = hermiticity_defect(h);
    if defect > HERMITICITY_TOL {
        return Err(FockError::NotHermitian { defect });
    }
    // Symmetrize so rounding in the caller cannot leak into the decomposition.
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// exp(tA) for finite square A.
///
/// Hermitian and anti-hermitian inputs go through the eigendecomposition,
/// which keeps unitaries unitary to rounding; everything else uses Pade
/// scaling-and-squaring.
pub fn matrix_exponential(a: &DMatrix<C64>, t: C64) -> FockResult<DMatrix<C64>> {
    check_finite(a)?;
    if !(t.re.is_finite() && t.im.is_finite()) {
        return Err(FockError::NonFinite);
    }
    if hermiticity_defect(a) <= 1e-13 {
        return exp_hermitian_scaled(a, t);
    }
    // Anti-hermitian A = iH: exp(tA) = exp((it) H).
    let h = a * C64::new(0.0, -1.0);
    if hermiticity_defect(&h) <= 1e-13 {
        return exp_hermitian_scaled(&h, t * C64::i());
    }
    Ok(expm_pade(&(a * t)))
}

/// exp(tH) for hermitian H via eigendecomposition.
pub fn exp_hermitian_scaled(h: &DMatrix<C64>, t: C64) -> FockResult<DMatrix<C64>> {
    let (values, vectors) = hermitian_eigen(h)?;
    let phases = DVector::from_iterator(values.len(), values.iter().map(|&l| (t * l).exp()));
    let mut scaled = vectors.clone();
    for (j, col) in phases.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0); // keep type; multiply below
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= *col;
        }
    }
    Ok(&scaled * vectors.adjoint())
}

/// Pade(13) scaling-and-squaring for a general square matrix.
fn expm_pade(a: &DMatrix<C64>) -> DMatrix<C64> {
    const THETA_13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let norm = a
        .column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let scale = C64::new((0.5_f64).powi(squarings as i32), 0.0);
    let a1 = a * scale;
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id = DMatrix::<C64>::identity(n, n);

    let u_inner = &a6 * C64::new(B[13], 0.0)
        + &a4 * C64::new(B[11], 0.0)
        + &a2 * C64::new(B[9], 0.0);
    let u_poly = &a6 * u_inner
        + &a6 * C64::new(B[7], 0.0)
        + &a4 * C64::new(B[5], 0.0)
        + &a2 * C64::new(B[3], 0.0)
        + &id * C64::new(B[1], 0.0);
    let u = &a1 * u_poly;

    let v_inner = &a6 * C64::new(B[12], 0.0)
        + &a4 * C64::new(B[10], 0.0)
        + &a2 * C64::new(B[8], 0.0);
    let v = &a6 * v_inner
        + &a6 * C64::new(B[6], 0.0)
        + &a4 * C64::new(B[4], 0.0)
        + &a2 * C64::new(B[2], 0.0)
        + &id * C64::new(B[0], 0.0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is singular; input norm out of range");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Spectral projector onto eigenvalues of H at or below `threshold`.
///
/// Degenerate eigenvalues are projected as a whole eigenspace; the cutoff
/// must stay clear of the spectrum by [`CUTOFF_RESOLUTION`].
pub fn spectral_projector(h: &DMatrix<C64>, threshold: f64) -> FockResult<DMatrix<C64>> {
    let (values, vectors) = hermitian_eigen(h)?;
    for &l in &values {
        if (l - threshold).abs() <= CUTOFF_RESOLUTION {
            return Err(FockError::AmbiguousCutoff { threshold, eigenvalue: l });
        }
    }
    let n = h.nrows();
    let mut e = DMatrix::zeros(n, n);
    for (j, &l) in values.iter().enumerate() {
        if l <= threshold {
            let v = vectors.column(j);
            // e += v v^dag
            for r in 0..n {
                for c in 0..n {
                    e[(r, c)] += v[r] * v[c].conj();
                }
            }
        }
    }
    Ok(e)
}

/// Rank of a projector: trace rounded to the nearest integer.
pub fn projector_rank(e: &DMatrix<C64>) -> usize {
    e.diagonal().iter().map(|z| z.re).sum::<f64>().round() as usize
}
