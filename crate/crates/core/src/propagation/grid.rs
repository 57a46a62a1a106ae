//! Grid-semigroup backend.
//!
//! The generating operator of the regularized kernel,
//!
//!   A = (p + i d/dq)^2 - d^2/dp^2 - 1,
//!
//! is diagonal in the q-frequency: for the Fourier mode e^(ikq) it reduces
//! to the one-dimensional operator H_k = (p - k)^2 - d^2/dp^2 - 1. The
//! field is therefore evolved by FFT along q, an eigendecomposition of the
//! discretized H_k (order-4 finite differences in p) per kept mode, and an
//! inverse FFT. Splitting in time with pointwise phase factors
//! exp(-i eps h(p, q)) extends the backend to non-quadratic Hamiltonian
//! symbols.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{
    Backend, KernelEstimate, LatticeSpec, PropagationError, PropagationResult,
};
use crate::coherent::PhasePoint;
use crate::symbols::SymbolPoly;

/// Uniform periodic grid over [-extent, extent) with n nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec2d {
    pub extent: f64,
    pub n: usize,
}

impl GridSpec2d {
    pub fn new(extent: f64, n: usize) -> Self {
        Self { extent, n }
    }

    pub fn delta(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.delta()
    }

    /// Physical frequency of FFT bin m along either axis.
    pub fn frequency(&self, m: usize) -> f64 {
        let m_signed = if m <= self.n / 2 { m as f64 } else { m as f64 - self.n as f64 };
        std::f64::consts::PI * m_signed / self.extent
    }
}

/// Complex field sampled on a [`GridSpec2d`]; row-major with p as the slow
/// index: values[ip * n + iq].
#[derive(Debug, Clone)]
pub struct GridField {
    pub spec: GridSpec2d,
    pub values: Vec<C64>,
}

impl GridField {
    pub fn zeros(spec: GridSpec2d) -> Self {
        Self { spec, values: vec![C64::new(0.0, 0.0); spec.n * spec.n] }
    }

    /// Discretized unit-mass delta at `pt`, split bilinearly over the four
    /// surrounding nodes.
    pub fn delta_at(spec: GridSpec2d, pt: PhasePoint) -> PropagationResult<Self> {
        let mut f = Self::zeros(spec);
        let d = spec.delta();
        let fp = (pt.p + spec.extent) / d;
        let fq = (pt.q + spec.extent) / d;
        if fp < 1.0 || fq < 1.0 || fp > (spec.n - 2) as f64 || fq > (spec.n - 2) as f64 {
            return Err(PropagationError::Resolution("source point too close to the grid edge"));
        }
        let ip = fp.floor() as usize;
        let iq = fq.floor() as usize;
        let wp = fp - ip as f64;
        let wq = fq - iq as f64;
        let inv = 1.0 / (d * d);
        for (di, wi) in [(0usize, 1.0 - wp), (1, wp)] {
            for (dj, wj) in [(0usize, 1.0 - wq), (1, wq)] {
                f.values[(ip + di) * spec.n + (iq + dj)] += C64::new(wi * wj * inv, 0.0);
            }
        }
        Ok(f)
    }

    pub fn total_mass(&self) -> C64 {
        let d = self.spec.delta();
        self.values.iter().sum::<C64>() * C64::new(d * d, 0.0)
    }

    pub fn abs_max(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Bilinear sample at an arbitrary point inside the grid.
    pub fn sample(&self, pt: PhasePoint) -> C64 {
        let n = self.spec.n;
        let d = self.spec.delta();
        let fp = ((pt.p + self.spec.extent) / d).clamp(0.0, (n - 2) as f64);
        let fq = ((pt.q + self.spec.extent) / d).clamp(0.0, (n - 2) as f64);
        let ip = fp.floor() as usize;
        let iq = fq.floor() as usize;
        let wp = fp - ip as f64;
        let wq = fq - iq as f64;
        let v = |i: usize, j: usize| self.values[i * n + j];
        v(ip, iq) * C64::new((1.0 - wp) * (1.0 - wq), 0.0)
            + v(ip + 1, iq) * C64::new(wp * (1.0 - wq), 0.0)
            + v(ip, iq + 1) * C64::new((1.0 - wp) * wq, 0.0)
            + v(ip + 1, iq + 1) * C64::new(wp * wq, 0.0)
    }
}

/// Bilinear sample helper (free function mirror of [`GridField::sample`]).
pub fn sample_field(field: &GridField, pt: PhasePoint) -> C64 {
    field.sample(pt)
}

struct Mode {
    bin: usize,
    vectors: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

/// Eigen-solved 1D generators for every kept q-frequency.
struct SemigroupOps {
    spec: GridSpec2d,
    modes: Vec<Mode>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

/// q-frequencies beyond this limit are dropped: their one-dimensional
/// generators are bounded below by (|k| - extent)^2 - 1 on the p-window,
/// so after the total evolution time they retain a factor of at most
/// e^(-40) of their initial amplitude.
fn mode_keep_limit(spec: &LatticeSpec, grid: GridSpec2d) -> f64 {
    let margin = (80.0 / (spec.nu * spec.t_total)).sqrt();
    let nyquist = std::f64::consts::PI / grid.delta();
    (grid.extent - 1.0 + margin).min(0.95 * nyquist)
}

impl SemigroupOps {
    fn build(spec: GridSpec2d, keep_limit: f64) -> Self {
        let n = spec.n;
        let dp = spec.delta();
        // Order-4 symmetric finite-difference Laplacian, truncated at the
        // boundary rows (the field vanishes there).
        let c = [-30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        let inv_dp2 = 1.0 / (dp * dp);
        let kept: Vec<usize> =
            (0..n).filter(|&m| spec.frequency(m).abs() <= keep_limit).collect();
        let modes: Vec<Mode> = kept
            .par_iter()
            .map(|&bin| {
                let k = spec.frequency(bin);
                let mut h = DMatrix::<f64>::zeros(n, n);
                for i in 0..n {
                    let p = spec.node(i);
                    h[(i, i)] = (p - k) * (p - k) - 1.0 - c[0] * inv_dp2;
                    for off in 1..=2usize {
                        if i + off < n {
                            h[(i, i + off)] = -c[off] * inv_dp2;
                            h[(i + off, i)] = -c[off] * inv_dp2;
                        }
                    }
                }
                let eig = h.symmetric_eigen();
                Mode { bin, vectors: eig.eigenvectors, eigenvalues: eig.eigenvalues }
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        Self { spec, modes, fft, ifft }
    }

    fn to_modes(&self, field: &mut GridField) {
        let n = self.spec.n;
        for row in field.values.chunks_mut(n) {
            self.fft.process(row);
        }
    }

    fn from_modes(&self, field: &mut GridField) {
        let n = self.spec.n;
        let scale = C64::new(1.0 / n as f64, 0.0);
        for row in field.values.chunks_mut(n) {
            self.ifft.process(row);
            for v in row {
                *v *= scale;
            }
        }
    }

    /// exp(-theta H_k) applied to every kept mode column; dropped modes
    /// are zeroed (their generator damps them far below tolerance).
    fn apply_heat(&self, field: &mut GridField, theta: f64) {
        let n = self.spec.n;
        let kept: Vec<bool> = {
            let mut mask = vec![false; n];
            for mode in &self.modes {
                mask[mode.bin] = true;
            }
            mask
        };
        let columns: Vec<(usize, Vec<C64>)> = self
            .modes
            .par_iter()
            .map(|mode| {
                let mut re = DVector::<f64>::zeros(n);
                let mut im = DVector::<f64>::zeros(n);
                for i in 0..n {
                    let z = field.values[i * n + mode.bin];
                    re[i] = z.re;
                    im[i] = z.im;
                }
                let mut cre = mode.vectors.transpose() * re;
                let mut cim = mode.vectors.transpose() * im;
                for j in 0..n {
                    let decay = (-theta * mode.eigenvalues[j]).exp();
                    cre[j] *= decay;
                    cim[j] *= decay;
                }
                let ore = &mode.vectors * cre;
                let oim = &mode.vectors * cim;
                let col: Vec<C64> = (0..n).map(|i| C64::new(ore[i], oim[i])).collect();
                (mode.bin, col)
            })
            .collect();
        for i in 0..n {
            for m in 0..n {
                if !kept[m] {
                    field.values[i * n + m] = C64::new(0.0, 0.0);
                }
            }
        }
        for (bin, col) in columns {
            for i in 0..n {
                field.values[i * n + bin] = col[i];
            }
        }
    }
}

/// Evolves a discretized delta at `source` under the kernel semigroup for
/// the total time of `spec`; the returned field times 2 pi is K^nu(. ;
/// source).
pub fn semigroup_grid(
    spec: &LatticeSpec,
    grid: GridSpec2d,
    source: PhasePoint,
) -> PropagationResult<GridField> {
    let mut field = GridField::delta_at(grid, source)?;
    let start_max = field.abs_max();
    let ops = SemigroupOps::build(grid, mode_keep_limit(spec, grid));
    ops.to_modes(&mut field);
    ops.apply_heat(&mut field, 0.5 * spec.nu * spec.t_total);
    ops.from_modes(&mut field);
    if !field.abs_max().is_finite() || field.abs_max() > 10.0 * start_max {
        return Err(PropagationError::Resolution("semigroup evolution blew up"));
    }
    Ok(field)
}

/// K^nu(to; from) sampled from the grid semigroup.
pub fn semigroup_kernel_value(
    spec: &LatticeSpec,
    grid: GridSpec2d,
    to: PhasePoint,
    from: PhasePoint,
) -> PropagationResult<KernelEstimate> {
    let field = semigroup_grid(spec, grid, from)?;
    let value = field.sample(to) * C64::new(2.0 * std::f64::consts::PI, 0.0);
    Ok(KernelEstimate::deterministic(value, Backend::GridSemigroup, *spec))
}

/// Evolved field for the kernel with Hamiltonian symbol h, by Strang
/// splitting: half phase, then alternating full heat and phase steps.
pub fn dk_field_grid(
    spec: &LatticeSpec,
    grid: GridSpec2d,
    source: PhasePoint,
    h: &SymbolPoly,
) -> PropagationResult<GridField> {
    let mut field = GridField::delta_at(grid, source)?;
    let ops = SemigroupOps::build(grid, mode_keep_limit(spec, grid));
    let n = grid.n;
    let eps = spec.epsilon();
    let theta = 0.5 * spec.nu * eps;

    let h_grid: Vec<C64> = (0..n * n)
        .map(|idx| {
            let pt = PhasePoint::new(grid.node(idx / n), grid.node(idx % n));
            h.eval(pt)
        })
        .collect();
    let phase_full: Vec<C64> = h_grid.iter().map(|&v| (-C64::i() * eps * v).exp()).collect();
    let phase_half: Vec<C64> =
        h_grid.iter().map(|&v| (-C64::i() * (0.5 * eps) * v).exp()).collect();

    let apply_phase = |field: &mut GridField, phase: &[C64]| {
        for (v, ph) in field.values.iter_mut().zip(phase) {
            *v *= ph;
        }
    };

    apply_phase(&mut field, &phase_half);
    for step in 0..spec.n_steps {
        ops.to_modes(&mut field);
        ops.apply_heat(&mut field, theta);
        ops.from_modes(&mut field);
        if step + 1 < spec.n_steps {
            apply_phase(&mut field, &phase_full);
        } else {
            apply_phase(&mut field, &phase_half);
        }
    }
    if !field.abs_max().is_finite() {
        return Err(PropagationError::Resolution("split evolution produced non-finite values"));
    }
    Ok(field)
}

/// K^nu with Hamiltonian symbol h (any polynomial degree) on the grid.
pub fn dk_kernel_grid(
    spec: &LatticeSpec,
    grid: GridSpec2d,
    to: PhasePoint,
    from: PhasePoint,
    h: &SymbolPoly,
) -> PropagationResult<KernelEstimate> {
    let field = dk_field_grid(spec, grid, from, h)?;
    let value = field.sample(to) * C64::new(2.0 * std::f64::consts::PI, 0.0);
    Ok(KernelEstimate::deterministic(value, Backend::GridSemigroup, *spec))
}
