//! Quantum Brownian motion on the grid: the matrix-free generator against the
//! dense model, localization rates and moment equations.

use subframe::born::{branch_set, heun_flow_step, OpenSystem};
use subframe::error::Error;
use subframe::hilbert::{DensityMatrix, StateVector};
use subframe::lindblad::integrate_master;
use subframe::models::Potential;
use subframe::qbm::{build_qbm, unconditioned_moments, GridSpec, QbmParams};

fn spec() -> GridSpec {
    GridSpec { n: 128, length: 20.0 }
}

#[test]
fn coherent_state_has_no_branch_rate() {
    let q = build_qbm(&QbmParams::new(1.0, 1.0, 0.2), &spec()).unwrap();
    let psi = q.coherent_state(0.7, -0.4).unwrap();
    let bs = branch_set(&q.system(), &psi).unwrap();
    assert!(bs.total_rate() <= 1e-10, "{}", bs.total_rate());
    let wide = q.coherent_state(0.0, 0.0).unwrap();
    let mut amps = wide.amps().clone();
    amps.iter_mut().zip(q.grid.x()).for_each(|(a, &x)| *a *= (-x * x / 8.0).exp() * (1.0 + x));
    let other = StateVector::from_vector(amps).normalized().unwrap();
    assert!(branch_set(&q.system(), &other).unwrap().total_rate() > 1e-3);
}

#[test]
fn coarse_grid_is_refused() {
    let err = build_qbm(&QbmParams::new(1.0, 1.0, 0.2), &GridSpec { n: 32, length: 40.0 }).unwrap_err();
    assert!(matches!(err, Error::Unresolved(_)), "{err}");
}

#[test]
fn caldeira_leggett_is_not_unravellable() {
    let mut p = QbmParams::new(1.0, 1.0, 0.2);
    p.caldeira_leggett = true;
    let q = build_qbm(&p, &spec()).unwrap();
    let psi = q.coherent_state(0.0, 0.0).unwrap();
    assert!(matches!(branch_set(&q.system(), &psi), Err(Error::NotLindbladForm(_))));
    assert!(matches!(branch_set(&q.model, &psi), Err(Error::NotLindbladForm(_))));
}

#[test]
fn matrix_free_flow_matches_dense_model() {
    let mut p = QbmParams::new(1.0, 1.0, 0.2);
    p.potential = Potential::Harmonic { stiffness: 0.5 };
    let q = build_qbm(&p, &GridSpec { n: 64, length: 16.0 }).unwrap();
    let psi0 = subframe::phase::coherent_state(1.0, 0.5, 1.3, &q.grid).unwrap();
    let sys = q.system();
    let (mut a, mut b) = (psi0.clone(), psi0);
    for _ in 0..100 {
        a = sys.flow_step(&a, 1e-4).unwrap();
        b = heun_flow_step(&q.model, &b, 1e-4).unwrap();
    }
    // the split drops constant energy shifts, so compare up to a global phase
    let ov = a.inner(&b);
    let aligned = a.amps() * (ov / ov.norm());
    let diff = StateVector::from_vector(aligned - b.amps()).norm();
    assert!(diff < 1e-5, "{diff}");
}

#[test]
fn master_moments_follow_damped_equations() {
    let mut p = QbmParams::new(1.0, 1.0, 0.2);
    p.potential = Potential::Harmonic { stiffness: 1.0 };
    let q = build_qbm(&p, &GridSpec { n: 64, length: 16.0 }).unwrap();
    let psi = subframe::phase::coherent_state(1.5, 0.0, 0.9, &q.grid).unwrap();
    let run = integrate_master(&q.model, &DensityMatrix::pure(&psi), 2e-4, 5000, 250).unwrap();
    assert!(run.positivity_violations.is_empty());
    let chk = unconditioned_moments(&run, &q).unwrap();
    assert!(chk.max_rel_residual_x < 5e-3, "{}", chk.max_rel_residual_x);
    assert!(chk.max_rel_residual_p < 5e-3, "{}", chk.max_rel_residual_p);
}
