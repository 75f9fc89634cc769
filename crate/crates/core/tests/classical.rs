//! Langevin ensembles against Ornstein-Uhlenbeck closed forms, the
//! Fokker-Planck moment check and the quantum-classical bridge report.

use subframe::classical::{
    fokker_planck_moment_check, langevin_step, moment_bridge, BridgeTolerances, ClassicalEnsemble, LangevinParams, QuantumMoments, Snapshot,
};
use subframe::error::Error;
use subframe::models::Potential;

fn params(gamma: f64, kt: f64, potential: Potential, dt: f64) -> LangevinParams {
    LangevinParams { mass: 1.0, gamma, kt, potential, dt, symplectic: false, position_noise: 0.0 }
}

fn evolve(ens: &mut ClassicalEnsemble, p: &LangevinParams, steps: usize) {
    for _ in 0..steps {
        langevin_step(ens, p).unwrap();
    }
}

#[test]
fn noise_amplitude_squares_to_four_gamma_m_kt() {
    let p = LangevinParams { mass: 2.5, ..params(0.3, 1.7, Potential::Free, 0.01) };
    assert!((p.noise_amplitude().powi(2) - 4.0 * 0.3 * 2.5 * 1.7).abs() < 1e-14);
}

#[test]
fn cold_free_momentum_decays_exponentially() {
    let p = params(0.5, 0.0, Potential::Free, 1e-4);
    let mut ens = ClassicalEnsemble::new(vec![(0.0, 2.0), (1.0, -1.0)], 1);
    evolve(&mut ens, &p, 10_000);
    for (start, pt) in [2.0, -1.0].iter().zip(&ens.points) {
        let want = start * (-2.0 * 0.5 * ens.t).exp();
        assert!((pt.1 - want).abs() < 1e-3 * start.abs(), "{} vs {want}", pt.1);
    }
}

#[test]
fn free_stationary_momentum_is_equipartition() {
    let p = params(0.5, 2.0, Potential::Free, 0.01);
    let mut ens = ClassicalEnsemble::gaussian(100_000, (0.0, 0.0), (0.0, 0.0), 17);
    evolve(&mut ens, &p, 500);
    let m = ens.moments();
    let p2 = m.var_p + m.mean_p * m.mean_p;
    assert!((p2 / 2.0 - 1.0).abs() < 0.05, "{p2}");
}

#[test]
fn symplectic_oscillator_conserves_energy() {
    let mut p = params(0.0, 0.0, Potential::Harmonic { stiffness: 1.0 }, 0.01);
    p.symplectic = true;
    let mut ens = ClassicalEnsemble::new(vec![(1.0, 0.0)], 1);
    let e0 = 0.5;
    let steps = (1000.0 * 2.0 * std::f64::consts::PI / p.dt) as usize;
    evolve(&mut ens, &p, steps);
    let (x, v) = ens.points[0];
    let e = 0.5 * x * x + 0.5 * v * v;
    assert!((e / e0 - 1.0).abs() < 1e-4, "{e}");
}

#[test]
fn fokker_planck_cold_start_and_stationary() {
    let p = params(0.5, 1.0, Potential::Free, 0.001);
    let mut ens = ClassicalEnsemble::gaussian(50_000, (0.0, 0.0), (0.0, 0.0), 3);
    let s0 = Snapshot { t: ens.t, points: ens.points.clone() };
    evolve(&mut ens, &p, 20);
    let s1 = Snapshot { t: ens.t, points: ens.points.clone() };
    let rep = fokker_planck_moment_check(&[s0, s1], &p).unwrap();
    assert!(rep.pass, "{:?}", rep.intervals);

    let mut th = ClassicalEnsemble::gaussian(50_000, (0.0, 0.0), (1.0, 1.0), 4);
    let a = Snapshot { t: 0.0, points: th.points.clone() };
    evolve(&mut th, &p, 50);
    let b = Snapshot { t: th.t, points: th.points.clone() };
    assert!(fokker_planck_moment_check(&[a, b], &p).unwrap().pass);
}

#[test]
fn fokker_planck_refuses_anharmonic_force() {
    let p = params(0.5, 1.0, Potential::DoubleWell { depth: 1.0, x_min: 1.0 }, 0.01);
    let s = Snapshot { t: 0.0, points: vec![(0.0, 0.0); 4] };
    assert!(matches!(fokker_planck_moment_check(&[s.clone(), s], &p), Err(Error::UnsupportedPotential(_))));
}

#[test]
fn harmonic_stationary_position_variance() {
    let p = params(0.5, 1.0, Potential::Harmonic { stiffness: 4.0 }, 0.002);
    let mut ens = ClassicalEnsemble::gaussian(40_000, (0.0, 0.0), (0.25, 1.0), 9);
    evolve(&mut ens, &p, 3000);
    let m = ens.moments();
    // kT/(mω²) = 1/4
    assert!((m.var_x / 0.25 - 1.0).abs() < 0.05, "{}", m.var_x);
}

fn cloud_series(kt: f64, seed: u64) -> (Vec<QuantumMoments>, Vec<subframe::classical::ClassicalMoments>) {
    let p = params(0.1, kt, Potential::Free, 0.01);
    let mut ens = ClassicalEnsemble::new(vec![(0.0, 0.0); 4000], seed);
    let mut out = vec![ens.moments()];
    for _ in 0..20 {
        evolve(&mut ens, &p, 50);
        out.push(ens.moments());
    }
    let q =
        out.iter().map(|c| QuantumMoments { t: c.t, count: c.count, mean_x: c.mean_x, mean_p: c.mean_p, var_x: c.var_x, var_p: c.var_p }).collect();
    (q, out)
}

#[test]
fn bridge_passes_on_matched_and_fails_on_mismatched_temperature() {
    let (q, _) = cloud_series(1.0, 1);
    let (_, c) = cloud_series(1.0, 2);
    let ok = moment_bridge(&q, &c, 0.1, 1.0, 1.0, &BridgeTolerances::default()).unwrap();
    assert!(ok.pass, "{}", ok.slope_rel_diff);
    let (_, hot) = cloud_series(2.0, 2);
    let bad = moment_bridge(&q, &hot, 0.1, 1.0, 2.0, &BridgeTolerances::default()).unwrap();
    assert!(!bad.pass);
    let short = &c[..3];
    assert!(matches!(moment_bridge(&q, short, 0.1, 1.0, 1.0, &BridgeTolerances::default()), Err(Error::MismatchedTimes(_))));
}
