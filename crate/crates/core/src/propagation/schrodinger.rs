//! Split-step evolution of the coherent-state representation.
//!
//! In the representation psi(p, q) = <p,q|psi> the Schroedinger equation
//! reads i d psi / dt = H(-i d/dq, q + i d/dp) psi. For a Hamiltonian
//! split as f(P) + V(Q) both pieces diagonalize in one FFT each:
//!
//! - f(-i d/dq) multiplies the q-frequency k component by f(k);
//! - V(q + i d/dp) multiplies the p-frequency s component by V(q - s),
//!   since q acts diagonally and i d/dp has eigenvalue -s on e^(isp).
//!
//! Every factor is a pure phase, so the grid norm is conserved exactly.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use super::{GridField, GridSpec2d, PropagationError, PropagationResult};
use crate::coherent::{CanonicalFamily, PhasePoint};
use crate::fock::FockVector;

/// Hamiltonian in the ordering-free split form f(P) + V(Q), with both
/// pieces given by real polynomial coefficients (index = power).
#[derive(Debug, Clone)]
pub struct SplitHamiltonian {
    pub f_momentum: Vec<f64>,
    pub v_position: Vec<f64>,
}

impl SplitHamiltonian {
    /// a^dag a = (P^2 + Q^2 - 1)/2.
    pub fn number_operator() -> Self {
        Self { f_momentum: vec![0.0, 0.0, 0.5], v_position: vec![-0.5, 0.0, 0.5] }
    }

    pub fn is_zero(&self) -> bool {
        self.f_momentum.iter().all(|&c| c == 0.0) && self.v_position.iter().all(|&c| c == 0.0)
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// psi(p, q) = <v(p,q)|psi> sampled on the grid.
pub fn field_from_state(
    family: &CanonicalFamily,
    grid: GridSpec2d,
    state: &FockVector,
) -> PropagationResult<GridField> {
    let n = grid.n;
    let d = family.dim();
    let mut out = GridField::zeros(grid);
    let mut coeffs = nalgebra::DVector::<C64>::zeros(d);
    for ip in 0..n {
        for iq in 0..n {
            let pt = PhasePoint::new(grid.node(ip), grid.node(iq));
            family.quadrature_state(pt, &mut coeffs);
            let mut amp = C64::new(0.0, 0.0);
            for k in 0..d {
                amp += coeffs[k].conj() * state.0[k];
            }
            out.values[ip * n + iq] = amp;
        }
    }
    Ok(out)
}

/// Norm^2 of a representation field under the dp dq / 2 pi measure.
pub fn field_norm_sq(field: &GridField) -> f64 {
    let d = field.spec.delta();
    field.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * d * d
        / (2.0 * std::f64::consts::PI)
}

/// Strang split-step integration of the coherent-state Schroedinger
/// equation over total time t.
pub fn schrodinger_cs_evolve(
    h: &SplitHamiltonian,
    psi0: &GridField,
    t: f64,
    steps: usize,
) -> PropagationResult<GridField> {
    if steps == 0 {
        return Err(PropagationError::InvalidSpec("need at least one time step"));
    }
    let mut field = psi0.clone();
    if h.is_zero() || t == 0.0 {
        return Ok(field);
    }
    let grid = field.spec;
    let n = grid.n;
    let dt = t / steps as f64;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let inv_n = C64::new(1.0 / n as f64, 0.0);

    // f(P): phases on the q-frequency axis.
    let f_phase: Vec<C64> = (0..n)
        .map(|m| (-C64::i() * dt * poly_eval(&h.f_momentum, grid.frequency(m))).exp())
        .collect();
    // V(Q): phases on (p-frequency, q) pairs, for a half and a full step.
    let v_phase = |scale: f64| -> Vec<C64> {
        let mut table = vec![C64::new(0.0, 0.0); n * n];
        for m in 0..n {
            let s = grid.frequency(m);
            for iq in 0..n {
                let arg = grid.node(iq) - s;
                table[m * n + iq] =
                    (-C64::i() * (scale * dt) * poly_eval(&h.v_position, arg)).exp();
            }
        }
        table
    };
    let v_half = v_phase(0.5);
    let v_full = v_phase(1.0);

    let mut col = vec![C64::new(0.0, 0.0); n];
    let mut apply_v = |field: &mut GridField, table: &Vec<C64>| {
        // FFT along p (strided columns), phase, inverse FFT.
        for iq in 0..n {
            for ip in 0..n {
                col[ip] = field.values[ip * n + iq];
            }
            fft.process(&mut col);
            for (m, c) in col.iter_mut().enumerate() {
                *c *= table[m * n + iq];
            }
            ifft.process(&mut col);
            for ip in 0..n {
                field.values[ip * n + iq] = col[ip] * inv_n;
            }
        }
    };
    let apply_f = |field: &mut GridField, fft: &std::sync::Arc<dyn rustfft::Fft<f64>>,
                   ifft: &std::sync::Arc<dyn rustfft::Fft<f64>>| {
        for row in field.values.chunks_mut(n) {
            fft.process(row);
            for (m, c) in row.iter_mut().enumerate() {
                *c *= f_phase[m];
            }
            ifft.process(row);
            for c in row.iter_mut() {
                *c *= inv_n;
            }
        }
    };

    apply_v(&mut field, &v_half);
    for step in 0..steps {
        apply_f(&mut field, &fft, &ifft);
        if step + 1 < steps {
            apply_v(&mut field, &v_full);
        } else {
            apply_v(&mut field, &v_half);
        }
    }
    if !field.abs_max().is_finite() {
        return Err(PropagationError::Resolution("split-step evolution produced NaN"));
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::exp_hermitian_scaled;

    fn overlap_field(grid: GridSpec2d, family: &CanonicalFamily) -> GridField {
        let state = FockVector::basis_state(family.dim(), 0);
        field_from_state(family, grid, &state).unwrap()
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let fam = CanonicalFamily::vacuum(32).unwrap();
        let grid = GridSpec2d::new(8.0, 64);
        let psi0 = overlap_field(grid, &fam);
        let h = SplitHamiltonian { f_momentum: vec![], v_position: vec![] };
        let out = schrodinger_cs_evolve(&h, &psi0, 1.0, 16).unwrap();
        let diff: f64 = out
            .values
            .iter()
            .zip(&psi0.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn number_operator_period_returns_initial_state() {
        let fam = CanonicalFamily::vacuum(48).unwrap();
        let grid = GridSpec2d::new(8.0, 128);
        // start from the coherent-state representation of |v(0.8, -0.5)>
        let v = fam.coherent_vector(PhasePoint::new(0.8, -0.5)).unwrap();
        let psi0 = field_from_state(&fam, grid, &v).unwrap();
        let t = 2.0 * std::f64::consts::PI;
        let out =
            schrodinger_cs_evolve(&SplitHamiltonian::number_operator(), &psi0, t, 4096).unwrap();
        let mut worst = 0.0_f64;
        for (a, b) in out.values.iter().zip(&psi0.values) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst <= 1e-3, "worst pointwise deviation {worst}");
    }

    #[test]
    fn norm_is_conserved() {
        let fam = CanonicalFamily::vacuum(48).unwrap();
        let grid = GridSpec2d::new(8.0, 128);
        let psi0 = overlap_field(grid, &fam);
        let before = field_norm_sq(&psi0);
        let out =
            schrodinger_cs_evolve(&SplitHamiltonian::number_operator(), &psi0, 2.0, 512).unwrap();
        let after = field_norm_sq(&out);
        assert!(((after - before) / before).abs() <= 1e-4, "{before} vs {after}");
        // The representation norm itself matches <psi|psi> = 1.
        assert!((before - 1.0).abs() <= 1e-6, "norm {before}");
    }

    #[test]
    fn split_step_matches_fock_oracle_field() {
        let fam = CanonicalFamily::vacuum(48).unwrap();
        let grid = GridSpec2d::new(8.0, 128);
        let state = {
            // normalized superposition of a few number states
            let mut v = nalgebra::DVector::<C64>::zeros(48);
            v[0] = C64::new(0.8, 0.0);
            v[1] = C64::new(0.4, 0.2);
            v[3] = C64::new(0.3, -0.1);
            FockVector(v).normalized()
        };
        let psi0 = field_from_state(&fam, grid, &state).unwrap();
        let t = 1.3;
        let evolved =
            schrodinger_cs_evolve(&SplitHamiltonian::number_operator(), &psi0, t, 2048).unwrap();

        let u = exp_hermitian_scaled(&fam.ops().number(), C64::new(0.0, -t)).unwrap();
        let state_t = FockVector(&u * &state.0);
        let expect = field_from_state(&fam, grid, &state_t).unwrap();
        let mut worst = 0.0_f64;
        for (a, b) in evolved.values.iter().zip(&expect.values) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst <= 1e-3, "worst deviation {worst}");
    }
}
