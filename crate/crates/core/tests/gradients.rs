mod common;

use common::{rel_error, GradInstance, Term};
use hsacc::alignment::Kernel;

fn check(term: Term, kernel: Kernel, incomplete: usize, seed: u64) {
    let inst = GradInstance::new(8, 5, incomplete, kernel, seed);
    let pairs = inst.gradients(term, 1e-5);
    let errors: Vec<f64> = pairs.iter().map(|&(a, n)| rel_error(a, n)).collect();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    let good = errors.iter().filter(|&&e| e < 1e-4).count();
    assert!(
        worst < 1e-3 && good * 100 >= errors.len() * 99,
        "{term:?}/{kernel}: worst {worst:e}, {good}/{} under 1e-4",
        errors.len()
    );
    assert!(pairs.iter().any(|&(a, _)| a != 0.0), "{term:?} has an all-zero gradient");
}

#[test]
fn reconstruction_gradient() {
    check(Term::Rec, Kernel::Linear, 0, 1);
    check(Term::Rec, Kernel::Linear, 3, 2);
}

#[test]
fn mutual_information_gradient() {
    check(Term::Mmi, Kernel::Linear, 0, 3);
    check(Term::Mmi, Kernel::Linear, 3, 4);
}

#[test]
fn linear_mmd_gradient() {
    check(Term::Mmd, Kernel::Linear, 0, 5);
    check(Term::Mmd, Kernel::Linear, 3, 6);
}

#[test]
fn rbf_mmd_gradient() {
    check(Term::Mmd, Kernel::Rbf, 0, 7);
    check(Term::Mmd, Kernel::Rbf, 3, 8);
}

#[test]
fn inference_gradient() {
    check(Term::Inf, Kernel::Linear, 0, 9);
    check(Term::Inf, Kernel::Linear, 3, 10);
}
