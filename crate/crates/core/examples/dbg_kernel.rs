use cspi_core::coherent::{overlap_closed_form, PhasePoint};
use cspi_core::propagation::{kernel_nu, LatticeSpec};

fn main() {
    let to = PhasePoint::new(1.0, 0.0);
    let from = PhasePoint::new(0.0, 0.0);
    for nu in [2.0, 8.0, 16.0] {
        let spec = LatticeSpec::new(nu, 2.0, 4096).unwrap();
        let got = kernel_nu(&spec, to, from, None).unwrap().value;
        let ov = overlap_closed_form(to, from);
        println!("nu={nu}: K = {got}, overlap = {ov}, |diff| = {:.3e}", (got - ov).norm());
    }
    let pt = PhasePoint::new(0.0, 0.0);
    let spec = LatticeSpec::new(16.0, 2.0, 2048).unwrap();
    let got = kernel_nu(&spec, pt, pt, None).unwrap().value;
    println!("coincident: {got}");
}
