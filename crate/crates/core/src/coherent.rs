//! Canonical and affine coherent-state families.
//!
//! Canonical states live in the truncated Fock space and are built by the
//! displacement product exp(-iqP) exp(ipQ) applied to a fiducial vector;
//! with the default Gaussian fiducial (the vacuum annihilated by
//! iP + Q = sqrt(2) a) their overlap has the closed form
//!
//!   <p2,q2|p1,q1> = exp{ i (p2+p1)(q2-q1)/2 - [(p2-p1)^2 + (q2-q1)^2]/4 }
//!
//! which is the anchor fixing every sign and ordering convention in this
//! crate. Affine states live on the half-line x > 0 as sampled
//! wavefunctions; the fiducial is the unique normalizable solution of
//! (Q - 1 + i D / beta)|beta> = 0, namely x^(beta-1/2) e^(-beta x) up to
//! normalization, and the coherent action is dilation plus a phase.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::fock::{self, FockError, FockVector, OperatorSet};
use crate::quad::{HalfLineGrid, PlaneQuad};

/// Norm-loss / tail-mass bound beyond which a truncated coherent vector is
/// rejected as corrupted.
pub const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CoherentError {
    #[error(transparent)]
    Fock(#[from] FockError),

    #[error("fiducial vector is not normalized: |norm - 1| = {defect:.3e}")]
    NotNormalized { defect: f64 },

    #[error("truncation too small for this phase-space point: defect {defect:.3e}")]
    Truncation { defect: f64 },

    #[error("affine parameter must satisfy beta > 1/2, got {0}")]
    InvalidBeta(f64),

    #[error("affine label q must be strictly positive, got {0}")]
    NonPositiveQ(f64),

    #[error("phase-space point must be finite")]
    NonFinitePoint,

    #[error("grid under-resolves the wavefunction: {what} (defect {defect:.3e})")]
    Resolution { what: &'static str, defect: f64 },

    #[error("quadrature domain too small: {what} (defect {defect:.3e})")]
    Domain { what: &'static str, defect: f64 },
}

pub type CoherentResult<T> = Result<T, CoherentError>;

/// A phase-space label (p, q).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub p: f64,
    pub q: f64,
}

impl PhasePoint {
    pub fn new(p: f64, q: f64) -> Self {
        Self { p, q }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.q.is_finite()
    }
}

/// Closed-form overlap <a|b> of two canonical coherent states with the
/// Gaussian fiducial; a = (p2, q2) is the bra, b = (p1, q1) the ket.
pub fn overlap_closed_form(a: PhasePoint, b: PhasePoint) -> C64 {
    let dp = a.p - b.p;
    let dq = a.q - b.q;
    let phase = 0.5 * (a.p + b.p) * dq;
    let damp = -0.25 * (dp * dp + dq * dq);
    C64::new(damp, phase).exp()
}

/// Norm of (iP + Q)|eta>; zero exactly when eta is annihilated by a.
///
/// The same number is produced by the quadratic form <eta|PdagP|eta> with
/// P = iP + Q, which is how the equivalence "P eta = 0 iff PdagP
/// expectation vanishes" is certified here.
pub fn polarization_residual(ops: &OperatorSet, eta: &FockVector) -> f64 {
    let pol = ops.p() * C64::i() + ops.q();
    let applied = &pol * &eta.0;
    let residual = applied.norm();
    let quad_form = (pol.adjoint() * &applied).dotc(&eta.0).conj();
    debug_assert!(
        (quad_form.re - residual * residual).abs() <= 1e-10 * (1.0 + residual * residual),
        "polarization quadratic form disagrees with residual norm"
    );
    residual
}

/// Cached eigendecompositions that let a single family evaluate many
/// coherent vectors at matvec cost instead of matrix-exponential cost.
#[derive(Debug, Clone)]
struct DisplacementCache {
    lambda_q: Vec<f64>,
    lambda_p: Vec<f64>,
    v_p: DMatrix<C64>,
    /// v_p^dag v_q
    u: DMatrix<C64>,
    /// v_q^dag eta
    w0: DVector<C64>,
}

/// Canonical coherent-state family on a Fock truncation.
#[derive(Debug, Clone)]
pub struct CanonicalFamily {
    ops: OperatorSet,
    fiducial: FockVector,
    gaussian_fiducial: bool,
    cache: DisplacementCache,
}

impl CanonicalFamily {
    /// Family with the default fiducial: the polarization vacuum |0>.
    pub fn vacuum(dim: usize) -> CoherentResult<Self> {
        let ops = OperatorSet::new(dim)?;
        let eta = FockVector::basis_state(dim, 0);
        Self::build(ops, eta, true)
    }

    /// Family with a caller-supplied normalized fiducial. The closed-form
    /// overlap applies only to the Gaussian (vacuum) fiducial, so overlap
    /// regressions are skipped for custom fiducials.
    pub fn with_fiducial(ops: OperatorSet, eta: FockVector) -> CoherentResult<Self> {
        if ops.dim() != eta.dim() {
            return Err(FockError::DimensionMismatch(ops.dim(), eta.dim()).into());
        }
        let defect = (eta.norm() - 1.0).abs();
        if defect > 1e-12 {
            return Err(CoherentError::NotNormalized { defect });
        }
        Self::build(ops, eta, false)
    }

    fn build(ops: OperatorSet, eta: FockVector, gaussian: bool) -> CoherentResult<Self> {
        let (lambda_q, v_q) = fock::hermitian_eigen(ops.q())?;
        let (lambda_p, v_p) = fock::hermitian_eigen(ops.p())?;
        let u = v_p.adjoint() * &v_q;
        let w0 = v_q.adjoint() * &eta.0;
        Ok(Self {
            ops,
            fiducial: eta,
            gaussian_fiducial: gaussian,
            cache: DisplacementCache { lambda_q, lambda_p, v_p, u, w0 },
        })
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn fiducial(&self) -> &FockVector {
        &self.fiducial
    }

    pub fn has_gaussian_fiducial(&self) -> bool {
        self.gaussian_fiducial
    }

    /// exp(-i q P) exp(i p Q) |eta>, evaluated through the cached
    /// eigendecompositions of Q and P (numerically identical to the two
    /// matrix exponentials applied in that order).
    ///
    /// Errors with [`CoherentError::Truncation`] when the constructed
    /// vector is corrupted by the truncation boundary. The construction is
    /// exactly unitary, so norm loss alone cannot detect corruption; the
    /// defect measured here is the mass sitting in the top eighth of the
    /// ladder plus any norm deviation.
    pub fn coherent_vector(&self, pt: PhasePoint) -> CoherentResult<FockVector> {
        let v = self.coherent_vector_unchecked(pt)?;
        let defect = self.truncation_defect(&v);
        if defect > TRUNCATION_TOL {
            return Err(CoherentError::Truncation { defect });
        }
        Ok(v)
    }

    /// Same construction without the truncation guard; used by quadrature
    /// loops whose outer tolerance already accounts for boundary cells.
    pub fn coherent_vector_unchecked(&self, pt: PhasePoint) -> CoherentResult<FockVector> {
        if !pt.is_finite() {
            return Err(CoherentError::NonFinitePoint);
        }
        let c = &self.cache;
        let d = self.dim();
        let mut t = DVector::zeros(d);
        for k in 0..d {
            t[k] = c.w0[k] * C64::from_polar(1.0, pt.p * c.lambda_q[k]);
        }
        let mut mid = &c.u * t;
        for k in 0..d {
            mid[k] *= C64::from_polar(1.0, -pt.q * c.lambda_p[k]);
        }
        Ok(FockVector(&c.v_p * mid))
    }

    fn truncation_defect(&self, v: &FockVector) -> f64 {
        let d = v.dim();
        let tail_start = d - d.div_ceil(8);
        let tail: f64 = (tail_start..d).map(|k| v.0[k].norm_sqr()).sum();
        let norm_defect = (v.norm() - 1.0).abs();
        tail.max(norm_defect)
    }

    /// <v(a)|v(b)> from the constructed vectors.
    pub fn overlap(&self, a: PhasePoint, b: PhasePoint) -> CoherentResult<C64> {
        let va = self.coherent_vector(a)?;
        let vb = self.coherent_vector(b)?;
        Ok(va.inner(&vb))
    }

    /// <v(pt)|psi> for a fixed Fock vector.
    pub fn amplitude(&self, pt: PhasePoint, psi: &FockVector) -> CoherentResult<C64> {
        let v = self.coherent_vector_unchecked(pt)?;
        Ok(v.inner(psi))
    }

    /// Accumulates sum_i w(p_i, q_i) |v_i><v_i| over the quadrature grid.
    ///
    /// The weight closure receives the node coordinates; the quadrature
    /// cell weight (including the measure scale) is applied internally.
    /// Work is chunked and reduced in fixed index order, so the result does
    /// not depend on the worker count.
    pub fn weighted_projector_sum<F>(&self, quad: &PlaneQuad, weight: F) -> DMatrix<C64>
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        let nodes = quad.nodes();
        self.projector_sum_over(&nodes, quad.weight(), weight)
    }

    /// Same accumulation restricted to grid cells selected by index.
    pub fn weighted_projector_sum_filtered<G>(&self, quad: &PlaneQuad, select: G) -> DMatrix<C64>
    where
        G: Fn(usize, usize) -> bool,
    {
        let n = quad.cells_per_axis();
        let mut nodes = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if select(i, j) {
                    nodes.push((quad.node(i), quad.node(j)));
                }
            }
        }
        self.projector_sum_over(&nodes, quad.weight(), |_, _| C64::new(1.0, 0.0))
    }

    fn projector_sum_over<F>(&self, nodes: &[(f64, f64)], cell: f64, weight: F) -> DMatrix<C64>
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        let d = self.dim();
        const CHUNK: usize = 2048;
        let partials: Vec<DMatrix<C64>> = nodes
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = DMatrix::<C64>::zeros(d, d);
                let mut v = DVector::zeros(d);
                for &(p, q) in chunk {
                    self.quadrature_state(PhasePoint::new(p, q), &mut v);
                    let w = weight(p, q) * cell;
                    rank_one_update(&mut acc, &v, w);
                }
                acc
            })
            .collect();
        let mut total = DMatrix::<C64>::zeros(d, d);
        for part in partials {
            total += part;
        }
        total
    }

    /// Coherent coefficients used inside quadrature loops.
    ///
    /// For the vacuum fiducial the exact Poisson profile
    /// <n|p,q> = e^(-ipq/2) e^(-|alpha|^2/2) alpha^n / sqrt(n!) is used:
    /// quadrature windows legitimately reach label radii far beyond what
    /// the truncated unitary construction can represent, where the
    /// matrix-exponential route aliases spurious amplitude onto low levels.
    /// Custom fiducials fall back to the constructive route and are
    /// restricted to windows the truncation actually covers.
    pub fn quadrature_state(&self, pt: PhasePoint, out: &mut DVector<C64>) {
        if self.gaussian_fiducial {
            let d = self.dim();
            let alpha = C64::new(pt.q, pt.p) / C64::new(2.0_f64.sqrt(), 0.0);
            let log_mag = -0.25 * (pt.p * pt.p + pt.q * pt.q);
            let mut c = C64::from_polar(log_mag.exp(), -0.5 * pt.p * pt.q);
            out[0] = c;
            for n in 1..d {
                c *= alpha / C64::new((n as f64).sqrt(), 0.0);
                out[n] = c;
            }
        } else {
            let v = self.coherent_vector_unchecked(pt).expect("finite node");
            out.copy_from(&v.0);
        }
    }
}

fn rank_one_update(acc: &mut DMatrix<C64>, v: &DVector<C64>, w: C64) {
    let d = v.len();
    for c in 0..d {
        let wc = w * v[c].conj();
        let col = &mut acc.column_mut(c);
        for r in 0..d {
            col[r] += v[r] * wc;
        }
    }
}

/// Operator-norm defect of the canonical resolution of unity on the
/// subspace spanned by the first `subspace_dim` number states:
///
///   || P (sum_i w_i |v_i><v_i| / (2 pi) - 1) P ||_2
pub fn resolution_of_unity_defect_canonical(
    family: &CanonicalFamily,
    quad: &PlaneQuad,
    subspace_dim: usize,
) -> CoherentResult<f64> {
    let d = family.dim();
    let m = subspace_dim.min(d);
    let two_pi = 2.0 * std::f64::consts::PI;
    let acc = family.weighted_projector_sum(quad, |_, _| C64::new(1.0 / two_pi, 0.0));
    let mut block = acc.view((0, 0), (m, m)).into_owned();
    for k in 0..m {
        block[(k, k)] -= C64::new(1.0, 0.0);
    }
    let defect = operator_norm(&block);

    // Window check: the identity-mass of level n outside the inscribed
    // disk of the window is the Poisson tail Q(n+1, L^2/2). When that
    // bound explains the measured defect, the window is too small and the
    // number reported would say nothing about the measure itself.
    let u_edge = 0.5 * quad.extent * quad.extent;
    let tail = poisson_cdf(m - 1, u_edge);
    if tail > 0.5 * defect && tail > 1e-12 {
        return Err(CoherentError::Domain {
            what: "defect dominated by the window boundary; enlarge the extent",
            defect,
        });
    }
    Ok(defect)
}

/// P(Poisson(rate) <= n) = regularized upper incomplete gamma Q(n+1, rate).
fn poisson_cdf(n: usize, rate: f64) -> f64 {
    let mut term = (-rate).exp();
    let mut sum = term;
    for k in 1..=n {
        term *= rate / k as f64;
        sum += term;
    }
    sum
}

fn operator_norm(m: &DMatrix<C64>) -> f64 {
    m.clone().singular_values().max()
}

/// A wavefunction sampled on a half-line grid.
#[derive(Debug, Clone)]
pub struct SampledWave {
    pub grid: HalfLineGrid,
    pub values: Vec<C64>,
}

impl SampledWave {
    pub fn norm_sq(&self) -> f64 {
        (0..self.grid.len())
            .map(|k| self.grid.trapezoid_weight(k) * self.values[k].norm_sqr())
            .sum()
    }

    /// <self|other> with trapezoid weights.
    pub fn inner(&self, other: &Self) -> C64 {
        (0..self.grid.len())
            .map(|k| {
                C64::new(self.grid.trapezoid_weight(k), 0.0)
                    * self.values[k].conj()
                    * other.values[k]
            })
            .sum()
    }

    /// <self| x |self> / <self|self>.
    pub fn position_expectation(&self) -> f64 {
        let num: f64 = (0..self.grid.len())
            .map(|k| self.grid.trapezoid_weight(k) * self.grid.node(k) * self.values[k].norm_sqr())
            .sum();
        num / self.norm_sq()
    }
}

/// Affine coherent-state family on the half-line, beta > 1/2.
///
/// The fiducial profile is x^(beta - 1/2) e^(-beta x); its normalization
/// constant is fixed by trapezoid quadrature on the stored grid.
#[derive(Debug, Clone)]
pub struct AffineFamily {
    beta: f64,
    grid: HalfLineGrid,
    norm_const: f64,
}

impl AffineFamily {
    pub fn new(beta: f64, grid: HalfLineGrid) -> CoherentResult<Self> {
        if !(beta > 0.5) || !beta.is_finite() {
            return Err(CoherentError::InvalidBeta(beta));
        }
        let x_needed = 12.0 / beta * beta.max(1.0);
        if grid.x_max < x_needed {
            return Err(CoherentError::Resolution {
                what: "x_max too small to resolve the exponential tail",
                defect: x_needed - grid.x_max,
            });
        }
        let raw = |x: f64| {
            if x == 0.0 {
                0.0
            } else {
                x.powf(beta - 0.5) * (-beta * x).exp()
            }
        };
        let quad_norm = |g: &HalfLineGrid| -> f64 {
            (0..g.len())
                .map(|k| {
                    let x = g.node(k);
                    g.trapezoid_weight(k) * raw(x) * raw(x)
                })
                .sum()
        };
        let coarse = quad_norm(&grid);
        let fine = quad_norm(&grid.refined());
        let drift = ((coarse - fine) / fine).abs();
        if drift > 1e-6 {
            return Err(CoherentError::Resolution {
                what: "normalization drifts under 2x grid refinement",
                defect: drift,
            });
        }
        Ok(Self { beta, grid, norm_const: 1.0 / coarse.sqrt() })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn grid(&self) -> &HalfLineGrid {
        &self.grid
    }

    /// Measure constant c_beta = 1 - 1/(2 beta); the resolution of unity
    /// reads  1 = integral |p,q><p,q| c_beta dp dq / (2 pi).
    pub fn measure_constant(&self) -> f64 {
        1.0 - 0.5 / self.beta
    }

    /// Normalized fiducial value at x >= 0.
    pub fn fiducial_value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.norm_const * x.powf(self.beta - 0.5) * (-self.beta * x).exp()
        }
    }

    /// The fiducial sampled on the family grid.
    pub fn fiducial(&self) -> SampledWave {
        let values = (0..self.grid.len())
            .map(|k| C64::new(self.fiducial_value(self.grid.node(k)), 0.0))
            .collect();
        SampledWave { grid: self.grid, values }
    }

    /// e^(-ipq) e^(ipx) q^(-1/2) psi(x/q) sampled on the family grid.
    pub fn coherent_wave(&self, pt: PhasePoint) -> CoherentResult<SampledWave> {
        if !pt.is_finite() {
            return Err(CoherentError::NonFinitePoint);
        }
        if pt.q <= 0.0 {
            return Err(CoherentError::NonPositiveQ(pt.q));
        }
        let scale = pt.q.sqrt().recip();
        let global = C64::from_polar(1.0, -pt.p * pt.q);
        let values: Vec<C64> = (0..self.grid.len())
            .map(|k| {
                let x = self.grid.node(k);
                global * C64::from_polar(1.0, pt.p * x) * (scale * self.fiducial_value(x / pt.q))
            })
            .collect();
        // Dilation pushes the support to x ~ q * O(1/beta); if the tail no
        // longer fits in the window the quadrature below it is meaningless.
        let edge = values[self.grid.len() - 1].norm_sqr() * self.grid.x_max;
        if edge > 1e-10 {
            return Err(CoherentError::Resolution {
                what: "dilated wave does not decay inside the grid window",
                defect: edge,
            });
        }
        Ok(SampledWave { grid: self.grid, values })
    }

    /// Quadrature overlap <v(a)|v(b)>.
    pub fn overlap(&self, a: PhasePoint, b: PhasePoint) -> CoherentResult<C64> {
        let wa = self.coherent_wave(a)?;
        let wb = self.coherent_wave(b)?;
        Ok(wa.inner(&wb))
    }
}

/// Quadrature window for the affine half-plane: p in [-p_max, p_max],
/// q in [q_min, q_max] on a log-spaced grid (midpoint rule in ln q).
///
/// The q-integrand of the affine resolution decays only polynomially at
/// large q and like a power of q at small q, so log spacing resolves both
/// ends at once.
#[derive(Debug, Clone, Copy)]
pub struct HalfPlaneQuad {
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub n_q: usize,
    pub measure_scale: f64,
}

impl HalfPlaneQuad {
    pub fn new(p_max: f64, q_min: f64, q_max: f64, n_q: usize) -> Self {
        Self { p_max, q_min, q_max, n_q, measure_scale: 1.0 }
    }

    pub fn with_measure_scale(mut self, scale: f64) -> Self {
        self.measure_scale = scale;
        self
    }

    /// (q, dq-weight) pairs of the log-spaced midpoint rule.
    pub fn q_nodes(&self) -> Vec<(f64, f64)> {
        let u_min = self.q_min.ln();
        let u_max = self.q_max.ln();
        let du = (u_max - u_min) / self.n_q as f64;
        (0..self.n_q)
            .map(|j| {
                let q = (u_min + (j as f64 + 0.5) * du).exp();
                (q, q * du)
            })
            .collect()
    }
}

/// Operator-norm defect of the affine resolution of unity on the span of
/// the supplied test wavefunctions:
///
///   || M - G ||  over the orthonormalized span, with
///   M_mn = sum_i w_i <f_m|v_i><v_i|f_n> c_beta / (2 pi).
///
/// The p-integral for every (f, q) pair is evaluated in one shot by an FFT
/// over the x-grid, which also fixes the p-node spacing to 2 pi / x_max.
pub fn resolution_of_unity_defect_affine(
    family: &AffineFamily,
    quad: &HalfPlaneQuad,
    test_fns: &[SampledWave],
) -> CoherentResult<f64> {
    assert!(!test_fns.is_empty(), "need at least one test wavefunction");
    let grid = *family.grid();
    let ortho = orthonormalize(test_fns);
    let m = ortho.len();

    let nx = grid.len() - 1; // power-of-two friendly FFT length on cells
    let dx = grid.dx();
    let dp = 2.0 * std::f64::consts::PI / (nx as f64 * dx);
    let keep: Vec<usize> = (0..nx)
        .filter(|&l| {
            let freq = fft_frequency(l, nx, dp);
            freq.abs() <= quad.p_max
        })
        .collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(nx);

    // For each q: amplitudes A[m][l] = <f_m | v(p_l, q)> via FFT, then
    // M += dp dq_weight c/(2pi) * A A^dag restricted to kept frequencies.
    let partials: Vec<DMatrix<C64>> = quad
        .q_nodes()
        .par_iter()
        .map(|&(qv, q_weight)| {
            let scale = qv.sqrt().recip();
            let mut acc = DMatrix::<C64>::zeros(m, m);
            let mut spectra: Vec<Vec<C64>> = Vec::with_capacity(m);
            for f in &ortho {
                let mut buf: Vec<C64> = (0..nx)
                    .map(|k| {
                        let x = grid.node(k);
                        let w = if k == 0 { 0.5 } else { 1.0 }; // trapezoid edge
                        f.values[k].conj() * (scale * family.fiducial_value(x / qv) * w * dx)
                    })
                    .collect();
                fft.process(&mut buf);
                spectra.push(buf);
            }
            for &l in &keep {
                for r in 0..m {
                    for c in 0..m {
                        acc[(r, c)] += spectra[r][l] * spectra[c][l].conj() * q_weight;
                    }
                }
            }
            acc
        })
        .collect();

    let c_beta = family.measure_constant() * quad.measure_scale;
    let w = dp * c_beta / (2.0 * std::f64::consts::PI);
    let mut mat = DMatrix::<C64>::zeros(m, m);
    for part in partials {
        mat += part;
    }
    mat *= C64::new(w, 0.0);
    for k in 0..m {
        mat[(k, k)] -= C64::new(1.0, 0.0);
    }
    Ok(operator_norm(&mat))
}

fn fft_frequency(l: usize, n: usize, dp: f64) -> f64 {
    if l <= n / 2 {
        l as f64 * dp
    } else {
        (l as f64 - n as f64) * dp
    }
}

/// Deterministic family of smooth test wavefunctions x^a e^(-b x) e^(i c x)
/// on the family grid, for probing the affine resolution of unity.
///
/// The exponents are kept in ranges (a >= 1.5, b >= 1.8) whose low- and
/// high-q resolution tails are small inside the default quadrature window.
/// Candidates too close to the span of the earlier draws are rejected;
/// without that the Gram matrix of a smooth two-parameter family becomes
/// ill-conditioned and the orthonormalized span is dominated by noise.
pub fn affine_test_functions(family: &AffineFamily, count: usize, seed: u64) -> Vec<SampledWave> {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = *family.grid();
    let mut accepted: Vec<SampledWave> = Vec::with_capacity(count);
    let mut ortho: Vec<SampledWave> = Vec::with_capacity(count);
    while accepted.len() < count {
        let a = 1.5 + 2.0 * rng.random::<f64>();
        let b = 1.8 + 1.4 * rng.random::<f64>();
        let c = 8.0 * rng.random::<f64>() - 4.0;
        let mut values: Vec<C64> = (0..grid.len())
            .map(|k| {
                let x = grid.node(k);
                if x == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::from_polar(x.powf(a) * (-b * x).exp(), c * x)
                }
            })
            .collect();
        let norm = (0..grid.len())
            .map(|k| grid.trapezoid_weight(k) * values[k].norm_sqr())
            .sum::<f64>()
            .sqrt();
        for v in &mut values {
            *v /= C64::new(norm, 0.0);
        }
        let cand = SampledWave { grid, values };
        let mut resid = cand.clone();
        for u in &ortho {
            let overlap = u.inner(&resid);
            for k in 0..resid.values.len() {
                resid.values[k] -= overlap * u.values[k];
            }
        }
        let r = resid.norm_sq().sqrt();
        if r < 0.3 {
            continue;
        }
        for v in &mut resid.values {
            *v /= C64::new(r, 0.0);
        }
        ortho.push(resid);
        accepted.push(cand);
    }
    accepted
}

/// Modified Gram-Schmidt with the trapezoid inner product.
fn orthonormalize(fns: &[SampledWave]) -> Vec<SampledWave> {
    let mut out: Vec<SampledWave> = Vec::with_capacity(fns.len());
    for f in fns {
        let mut v = f.clone();
        for u in &out {
            let c = u.inner(&v);
            for k in 0..v.values.len() {
                v.values[k] -= c * u.values[k];
            }
        }
        let n = v.norm_sq().sqrt();
        assert!(n > 1e-10, "test wavefunctions are numerically dependent");
        for val in &mut v.values {
            *val /= C64::new(n, 0.0);
        }
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_form_normalization_and_reference_points() {
        let o = overlap_closed_form(PhasePoint::new(1.3, -0.4), PhasePoint::new(1.3, -0.4));
        assert_abs_diff_eq!(o.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.im, 0.0, epsilon = 1e-15);

        let o = overlap_closed_form(PhasePoint::new(1.0, 0.0), PhasePoint::new(0.0, 0.0));
        assert_abs_diff_eq!(o.re, (-0.25_f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(o.im, 0.0, epsilon = 1e-15);

        let o = overlap_closed_form(PhasePoint::new(0.0, 1.0), PhasePoint::new(0.0, 0.0));
        assert_abs_diff_eq!(o.re, (-0.25_f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(o.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_is_contractive_and_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let pts: Vec<PhasePoint> = (0..12)
            .map(|_| PhasePoint::new(4.0 * rng.random::<f64>() - 2.0, 4.0 * rng.random::<f64>() - 2.0))
            .collect();
        let n = pts.len();
        let gram = DMatrix::from_fn(n, n, |i, j| overlap_closed_form(pts[i], pts[j]));
        for i in 0..n {
            for j in 0..n {
                let mag = gram[(i, j)].norm();
                assert!(mag <= 1.0 + 1e-15);
                if i != j {
                    assert!(mag < 1.0);
                }
                // hermitian kernel
                assert!((gram[(i, j)] - gram[(j, i)].conj()).norm() <= 1e-15);
            }
        }
        let eigs = fock::hermitian_eigen(&gram).unwrap().0;
        assert!(eigs[0] >= -1e-10, "min eigenvalue {}", eigs[0]);
    }

    #[test]
    fn vacuum_family_reproduces_fiducial_at_origin() {
        let fam = CanonicalFamily::vacuum(32).unwrap();
        let v = fam.coherent_vector(PhasePoint::new(0.0, 0.0)).unwrap();
        let diff = (&v.0 - &fam.fiducial().0).norm();
        assert!(diff <= 1e-13);
    }

    #[test]
    fn constructed_overlap_matches_closed_form_reference() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let got = fam
            .overlap(PhasePoint::new(0.0, 0.0), PhasePoint::new(1.0, 0.0))
            .unwrap();
        let expect = overlap_closed_form(PhasePoint::new(0.0, 0.0), PhasePoint::new(1.0, 0.0));
        assert!((got - expect).norm() <= 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn constructed_overlaps_match_closed_form_on_random_points() {
        let fam = CanonicalFamily::vacuum(128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let a = PhasePoint::new(4.0 * rng.random::<f64>() - 2.0, 4.0 * rng.random::<f64>() - 2.0);
            let b = PhasePoint::new(4.0 * rng.random::<f64>() - 2.0, 4.0 * rng.random::<f64>() - 2.0);
            let err = (fam.overlap(a, b).unwrap() - overlap_closed_form(a, b)).norm();
            worst = worst.max(err);
        }
        assert!(worst <= 1e-9, "worst deviation {worst}");
    }

    #[test]
    fn truncation_error_monotone_in_dimension() {
        let a = PhasePoint::new(1.7, -1.1);
        let b = PhasePoint::new(-0.8, 0.9);
        let expect = overlap_closed_form(a, b);
        let mut last = f64::INFINITY;
        for dim in [16, 32, 64, 128] {
            let fam = CanonicalFamily::vacuum(dim).unwrap();
            let err = (fam.overlap(a, b).unwrap() - expect).norm();
            assert!(err <= last * 1.5 + 1e-15, "dim {dim}: {err} after {last}");
            last = err;
        }
        assert!(last <= 1e-12);
    }

    #[test]
    fn displacement_preserves_norm_in_window() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let pt = PhasePoint::new(8.0 * rng.random::<f64>() - 4.0, 8.0 * rng.random::<f64>() - 4.0);
            let v = fam.coherent_vector(pt).unwrap();
            assert!((v.norm() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn far_point_on_small_truncation_is_rejected() {
        let fam = CanonicalFamily::vacuum(16).unwrap();
        let res = fam.coherent_vector(PhasePoint::new(4.0, 4.0));
        assert!(matches!(res, Err(CoherentError::Truncation { .. })));
    }

    #[test]
    fn polarization_residuals_from_ladder_algebra() {
        let ops = OperatorSet::new(32).unwrap();
        let ground = FockVector::basis_state(32, 0);
        assert!(polarization_residual(&ops, &ground) <= 1e-12);

        let first = FockVector::basis_state(32, 1);
        assert_abs_diff_eq!(
            polarization_residual(&ops, &first),
            2.0_f64.sqrt(),
            epsilon = 1e-12
        );

        let mixed = {
            let mut v = DVector::zeros(32);
            v[0] = C64::new(1.0, 0.0);
            v[1] = C64::new(1.0, 0.0);
            FockVector(v).normalized()
        };
        assert_abs_diff_eq!(polarization_residual(&ops, &mixed), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_state_matches_constructive_route() {
        let fam = CanonicalFamily::vacuum(96).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..25 {
            let pt = PhasePoint::new(
                6.0 * rng.random::<f64>() - 3.0,
                6.0 * rng.random::<f64>() - 3.0,
            );
            let constructed = fam.coherent_vector(pt).unwrap();
            let mut closed = DVector::zeros(96);
            fam.quadrature_state(pt, &mut closed);
            let diff = (&constructed.0 - &closed).norm();
            assert!(diff <= 1e-10, "route mismatch {diff} at ({}, {})", pt.p, pt.q);
        }
    }

    #[test]
    fn resolution_of_unity_canonical_defect() {
        let fam = CanonicalFamily::vacuum(64).unwrap();
        let quad = PlaneQuad::new(12.0, 0.05);
        let defect = resolution_of_unity_defect_canonical(&fam, &quad, 21).unwrap();
        assert!(defect <= 1e-6, "defect {defect}");
    }

    #[test]
    fn resolution_of_unity_scales_with_measure() {
        let fam = CanonicalFamily::vacuum(32).unwrap();
        let quad = PlaneQuad::new(10.0, 0.1).with_measure_scale(0.5);
        let defect = resolution_of_unity_defect_canonical(&fam, &quad, 9).unwrap();
        assert!((defect - 0.5).abs() <= 1e-6, "defect {defect}");
    }

    #[test]
    fn resolution_of_unity_flags_small_window() {
        let fam = CanonicalFamily::vacuum(32).unwrap();
        let quad = PlaneQuad::new(4.0, 0.1);
        let res = resolution_of_unity_defect_canonical(&fam, &quad, 16);
        assert!(matches!(res, Err(CoherentError::Domain { .. })), "{res:?}");
    }

    #[test]
    fn resolution_of_unity_affine_defect() {
        let fam = test_family();
        let quad = HalfPlaneQuad::new(96.0, 7e-3, 300.0, 1024);
        let fns = affine_test_functions(&fam, 8, 7);
        let defect = resolution_of_unity_defect_affine(&fam, &quad, &fns).unwrap();
        assert!(defect <= 1e-4, "defect {defect}");
    }

    #[test]
    fn resolution_of_unity_affine_scales_with_measure() {
        let fam = test_family();
        let quad = HalfPlaneQuad::new(96.0, 7e-3, 300.0, 1024).with_measure_scale(0.5);
        let fns = affine_test_functions(&fam, 4, 8);
        let defect = resolution_of_unity_defect_affine(&fam, &quad, &fns).unwrap();
        assert!((defect - 0.5).abs() <= 1e-3, "defect {defect}");
    }

    #[test]
    fn amplitude_agrees_with_inner_product() {
        let fam = CanonicalFamily::vacuum(48).unwrap();
        let psi = FockVector::basis_state(48, 3);
        let pt = PhasePoint::new(0.7, -1.2);
        let via_amp = fam.amplitude(pt, &psi).unwrap();
        let via_vec = fam.coherent_vector(pt).unwrap().inner(&psi);
        assert!((via_amp - via_vec).norm() <= 1e-14);
    }

    // ---- affine family ----

    fn test_family() -> AffineFamily {
        AffineFamily::new(2.0, HalfLineGrid::new(40.0, 1 << 15)).unwrap()
    }

    #[test]
    fn affine_rejects_bad_beta() {
        assert!(matches!(
            AffineFamily::new(0.5, HalfLineGrid::new(40.0, 4096)),
            Err(CoherentError::InvalidBeta(_))
        ));
        assert!(matches!(
            AffineFamily::new(0.3, HalfLineGrid::new(40.0, 4096)),
            Err(CoherentError::InvalidBeta(_))
        ));
    }

    #[test]
    fn affine_rejects_underresolved_grid() {
        assert!(matches!(
            AffineFamily::new(2.0, HalfLineGrid::new(40.0, 64)),
            Err(CoherentError::Resolution { .. })
        ));
        assert!(matches!(
            AffineFamily::new(2.0, HalfLineGrid::new(3.0, 4096)),
            Err(CoherentError::Resolution { .. })
        ));
    }

    #[test]
    fn affine_fiducial_is_normalized_and_matches_gamma_oracle() {
        let fam = test_family();
        let psi = fam.fiducial();
        assert_abs_diff_eq!(psi.norm_sq(), 1.0, epsilon = 1e-8);
        // Closed-form normalization: C = (2 beta)^beta / sqrt(Gamma(2 beta)).
        let beta = fam.beta();
        let c_exact = (2.0 * beta).powf(beta) / statrs::function::gamma::gamma(2.0 * beta).sqrt();
        assert_abs_diff_eq!(fam.norm_const, c_exact, epsilon = 1e-7 * c_exact);
    }

    #[test]
    fn affine_fiducial_solves_first_order_condition() {
        // Apply (x - 1 + (x d/dx + 1/2)/beta) with central differences and
        // measure the L2 residual; second-order convergence in dx.
        let fam = AffineFamily::new(2.0, HalfLineGrid::new(40.0, 1 << 16)).unwrap();
        let psi = fam.fiducial();
        let g = fam.grid();
        let dx = g.dx();
        let beta = fam.beta();
        let mut residual_sq = 0.0;
        for k in 1..g.len() - 1 {
            let x = g.node(k);
            let dpsi = (psi.values[k + 1].re - psi.values[k - 1].re) / (2.0 * dx);
            let r = (x - 1.0) * psi.values[k].re + (x * dpsi + 0.5 * psi.values[k].re) / beta;
            residual_sq += r * r * dx;
        }
        assert!(residual_sq.sqrt() <= 1e-6, "residual {}", residual_sq.sqrt());
    }

    #[test]
    fn affine_fiducial_position_expectation_is_unity() {
        let fam = test_family();
        let psi = fam.fiducial();
        assert_abs_diff_eq!(psi.position_expectation(), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn affine_beta_one_vanishes_at_origin() {
        let fam = AffineFamily::new(1.0, HalfLineGrid::new(40.0, 1 << 15)).unwrap();
        assert_eq!(fam.fiducial_value(0.0), 0.0);
        assert_eq!(fam.fiducial().values[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn affine_identity_label_returns_fiducial() {
        let fam = test_family();
        let w = fam.coherent_wave(PhasePoint::new(0.0, 1.0)).unwrap();
        let psi = fam.fiducial();
        let diff: f64 = w
            .values
            .iter()
            .zip(&psi.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn affine_dilation_is_unitary_on_random_labels() {
        let fam = test_family();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..50 {
            let pt = PhasePoint::new(
                4.0 * rng.random::<f64>() - 2.0,
                0.5 + 2.5 * rng.random::<f64>(),
            );
            let w = fam.coherent_wave(pt).unwrap();
            assert_abs_diff_eq!(w.norm_sq(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn affine_position_expectation_scales_with_q() {
        let fam = test_family();
        for q in [0.7, 1.0, 2.2] {
            let w = fam.coherent_wave(PhasePoint::new(0.4, q)).unwrap();
            assert_abs_diff_eq!(w.position_expectation(), q, epsilon = 1e-6);
        }
    }

    #[test]
    fn affine_rejects_nonpositive_q() {
        let fam = test_family();
        assert!(matches!(
            fam.coherent_wave(PhasePoint::new(0.0, 0.0)),
            Err(CoherentError::NonPositiveQ(_))
        ));
        assert!(matches!(
            fam.coherent_wave(PhasePoint::new(0.0, -1.0)),
            Err(CoherentError::NonPositiveQ(_))
        ));
    }

    #[test]
    fn affine_overlap_is_normalized_hermitian_contractive() {
        let fam = test_family();
        let a = PhasePoint::new(0.6, 1.4);
        let b = PhasePoint::new(-0.3, 0.8);
        let oaa = fam.overlap(a, a).unwrap();
        assert_abs_diff_eq!(oaa.re, 1.0, epsilon = 1e-8);
        let oab = fam.overlap(a, b).unwrap();
        let oba = fam.overlap(b, a).unwrap();
        assert!((oab - oba.conj()).norm() <= 1e-10);
        assert!(oab.norm() <= 1.0 + 1e-10);
    }

    #[test]
    fn affine_gram_matrix_is_positive_semidefinite() {
        let fam = test_family();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let pts: Vec<PhasePoint> = (0..6)
            .map(|_| {
                PhasePoint::new(3.0 * rng.random::<f64>() - 1.5, 0.6 + 2.0 * rng.random::<f64>())
            })
            .collect();
        let g = DMatrix::from_fn(6, 6, |i, j| fam.overlap(pts[i], pts[j]).unwrap());
        let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
        let eigs = fock::hermitian_eigen(&g).unwrap().0;
        assert!(eigs[0] >= -1e-9, "min eigenvalue {}", eigs[0]);
    }

    #[test]
    fn affine_overlap_stable_under_grid_refinement() {
        let a = PhasePoint::new(0.0, 2.0);
        let b = PhasePoint::new(0.0, 1.0);
        let coarse = test_family().overlap(a, b).unwrap();
        let fine = AffineFamily::new(2.0, HalfLineGrid::new(40.0, 1 << 16))
            .unwrap()
            .overlap(a, b)
            .unwrap();
        assert!((coarse - fine).norm() <= 1e-7, "{coarse} vs {fine}");
    }
}
