//! Phase-space densities, the kicked rotor, Lyapunov estimation and the scale
//! formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subframe::grid::Grid1d;
use subframe::hilbert::{CVector, StateVector, C64};
use subframe::models::{
    divergence_rate, ehrenfest_time, localization_scales, localization_time, lyapunov_estimate, HarmonicFlow, KickedRotor, KickedRotorParams,
    StandardMap, ThermalParams,
};
use subframe::phase::{coherent_state, field_moments, husimi, husimi_cylinder, rotor_coherent_state, wigner, PhaseGrid};

fn grid() -> Grid1d {
    Grid1d::new(128, 20.0, 1.0).unwrap()
}

#[test]
fn coherent_wigner_is_normalized_gaussian() {
    let g = grid();
    let psi = coherent_state(1.0, -0.5, 0.8, &g).unwrap();
    let pg = PhaseGrid::wigner_plane(&g, 256).unwrap();
    let w = wigner(&psi, &g, &pg).unwrap();
    assert!((w.mass() - 1.0).abs() < 1e-8, "{}", w.mass());
    assert!(w.min() > -1e-8);
    let m = field_moments(&w).unwrap();
    assert!((m.mean[0] - 1.0).abs() < 1e-6 && (m.mean[1] + 0.5).abs() < 1e-6);
    // |ψ|² ∝ exp(−x²/σ²): var x = σ²/2, var p = ħ²/2σ²
    assert!((m.cov[0][0] - 0.32).abs() < 1e-6);
    assert!((m.cov[1][1] - 1.0 / 1.28).abs() < 1e-6);
}

#[test]
fn cat_state_wigner_goes_negative_and_husimi_does_not() {
    let g = grid();
    let a = coherent_state(-3.0, 0.0, 0.8, &g).unwrap();
    let b = coherent_state(3.0, 0.0, 0.8, &g).unwrap();
    let cat = StateVector::from_vector(a.amps() + b.amps()).normalized().unwrap();
    let w = wigner(&cat, &g, &PhaseGrid::wigner_plane(&g, 256).unwrap()).unwrap();
    assert!(w.min() < -0.05, "{}", w.min());
    let pg = PhaseGrid::plane((-10.0, 10.0), 100, (-6.0, 6.0), 120).unwrap();
    let h = husimi(&cat, &g, &pg, 0.8).unwrap();
    assert!(h.min() >= 0.0);
    assert!((h.mass() - 1.0).abs() < 1e-3, "{}", h.mass());
}

#[test]
fn husimi_adds_half_the_smoothing_width() {
    let g = grid();
    let s = 0.8;
    let psi = coherent_state(0.5, 1.0, s, &g).unwrap();
    let pg = PhaseGrid::plane((-8.0, 8.0), 160, (-6.0, 8.0), 140).unwrap();
    let m = field_moments(&husimi(&psi, &g, &pg, s).unwrap()).unwrap();
    assert!((m.cov[0][0] - s * s).abs() < 1e-3, "{}", m.cov[0][0]);
    assert!((m.cov[1][1] - 1.0 / (s * s)).abs() < 1e-3, "{}", m.cov[1][1]);
}

#[test]
fn rotor_floquet_is_unitary_and_matches_step() {
    let rotor = KickedRotor::new(KickedRotorParams { dim: 65, ..Default::default() }).unwrap();
    let f = rotor.floquet();
    assert!(f.unitarity_defect() < 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut c = CVector::from_fn(65, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    c /= C64::new(c.norm(), 0.0);
    let dense = f.mat() * &c;
    rotor.step(&mut c);
    assert!((dense - &c).norm() < 1e-12);
    assert!((c.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn rotor_husimi_of_coherent_state_has_unit_mass() {
    let rotor = KickedRotor::new(KickedRotorParams::default()).unwrap();
    let psi = rotor_coherent_state(1.0, 3.0, 1.0, &rotor).unwrap();
    let pg = PhaseGrid::cylinder(128, (-30.0, 30.0), 121).unwrap();
    let h = husimi_cylinder(psi.amps(), &rotor, &pg, 1.0).unwrap();
    assert!((h.mass() - 1.0).abs() < 1e-6, "{}", h.mass());
    let m = field_moments(&h).unwrap();
    assert!((m.mean[1] - 3.0).abs() < 1e-6);
    assert!((m.mean[0] - 1.0).abs() < 1e-6);
}

#[test]
fn lyapunov_exponents() {
    let zero = lyapunov_estimate(&HarmonicFlow { omega: 1.3, dt: 0.1 }, 2000, 10, 1).unwrap();
    assert!(zero.lambda.abs() < 1e-12);
    let sm = lyapunov_estimate(&StandardMap { k_eff: 10.0 }, 1000, 50, 3).unwrap();
    let want = 5f64.ln();
    assert!((sm.lambda - want).abs() < 0.15 * want, "{}", sm.lambda);
    assert!((sm.lambda - 1.6175).abs() < 0.01, "frozen estimate moved: {}", sm.lambda);
    let dv = divergence_rate(10.0, (1.0, 0.3), 1e-9, 200, 4).unwrap();
    assert!((dv - want).abs() < 0.3 * want, "{dv}");
}

#[test]
fn hyperion_ehrenfest_time() {
    // λ⁻¹ = 100 days, J/ħ = 10⁵⁸
    let t = ehrenfest_time(0.01, 1e58, 1.0).unwrap();
    assert!((t - 13354.993539365463).abs() < 1e-6);
    let years = t / 365.25;
    assert!((years - 36.56).abs() < 0.01, "{years}");
}

#[test]
fn localization_scales_are_self_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let p = ThermalParams {
            mass: 10f64.powf(rng.random_range(-3.0..3.0)),
            kt: 10f64.powf(rng.random_range(-3.0..3.0)),
            gamma: 10f64.powf(rng.random_range(-3.0..3.0)),
            hbar: 10f64.powf(rng.random_range(-2.0..1.0)),
        };
        let lambda = 10f64.powf(rng.random_range(-3.0..3.0));
        let s = localization_scales(&p, lambda).unwrap();
        assert!((s.r_est / lambda - 1.0).abs() < 1e-12);
        assert!((s.tau * lambda - 1.0).abs() < 1e-12);
        assert!((localization_time(&p, s.ell).unwrap() - s.tau).abs() <= 1e-12 * s.tau);
    }
}
