//! Closed-form master-equation decays and unravelling reproducibility.

use subframe::ensemble::{ensemble_run, with_threads, EnsembleSpec, MomentProbe, Scheme};
use subframe::hilbert::{qubit, trace_distance_matrix, DensityMatrix};
use subframe::io::config::QubitChannel;
use subframe::io::run::qubit_model;
use subframe::lindblad::integrate_master;

#[test]
fn dephasing_coherence_decays_as_exp_minus_2_gamma_t() {
    let m = qubit_model(QubitChannel::Dephasing, 1.0, 0.0, 1.0).unwrap();
    let run = integrate_master(&m, &DensityMatrix::pure(&qubit::plus()), 1e-3, 1000, 1000).unwrap();
    let rho = run.states.last().unwrap();
    assert!((run.times.last().unwrap() - 1.0).abs() < 1e-12);
    assert!((rho[(0, 1)].re - 0.5 * (-2.0f64).exp()).abs() < 1e-6);
    assert!(rho[(0, 1)].im.abs() < 1e-12);
}

#[test]
fn damping_population_decays_as_exp_minus_gamma_t() {
    let m = qubit_model(QubitChannel::AmplitudeDamping, 1.0, 0.0, 1.0).unwrap();
    let run = integrate_master(&m, &DensityMatrix::pure(&qubit::excited()), 1e-3, 1000, 500).unwrap();
    assert_eq!(run.times.len(), 3);
    let rho = run.states.last().unwrap();
    assert!((rho[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-6);
    assert!(run.max_trace_drift < 1e-13);
}

#[test]
fn precession_leaves_populations_alone() {
    let m = qubit_model(QubitChannel::Dephasing, 0.5, 3.0, 1.0).unwrap();
    let run = integrate_master(&m, &DensityMatrix::pure(&qubit::plus()), 1e-3, 2000, 2000).unwrap();
    let rho = run.states.last().unwrap();
    // ρ01(t) = ½ e^{−2γt} e^{−iωt}
    let want = 0.5 * (-2.0f64).exp();
    assert!((rho[(0, 1)].norm() - want).abs() < 1e-6);
    assert!((rho[(0, 1)].arg() + 6.0 - 2.0 * std::f64::consts::PI).abs() < 1e-6);
    assert!((rho[(0, 0)].re - 0.5).abs() < 1e-12);
}

fn small_spec(scheme: Scheme) -> EnsembleSpec {
    let mut s = EnsembleSpec::new(scheme, 300, 0.01, 100, 99);
    s.record_every = 10;
    s.keep_trajectories = 2;
    s
}

#[test]
fn ensembles_track_master_on_damping() {
    let m = qubit_model(QubitChannel::AmplitudeDamping, 1.0, 0.0, 1.0).unwrap();
    let psi = qubit::excited();
    let master = integrate_master(&m, &DensityMatrix::pure(&psi), 0.01, 100, 10).unwrap();
    for scheme in [Scheme::Born, Scheme::Qsd] {
        let res = ensemble_run(&m, &psi, &small_spec(scheme), MomentProbe::None).unwrap();
        let rhos = res.mean_rho.unwrap();
        let worst = rhos.iter().zip(&master.states).map(|(a, b)| trace_distance_matrix(a, b).unwrap()).fold(0.0, f64::max);
        // 300 trajectories: statistical error a few percent
        assert!(worst < 0.1, "{scheme:?}: {worst}");
        assert!(res.max_norm_error < 1e-12);
    }
}

#[test]
fn ensemble_is_bit_identical_across_worker_counts() {
    let m = qubit_model(QubitChannel::AmplitudeDamping, 1.0, 2.0, 1.0).unwrap();
    let psi = qubit::plus();
    for scheme in [Scheme::Born, Scheme::Qsd] {
        let spec = small_spec(scheme);
        let a = with_threads(Some(1), || ensemble_run(&m, &psi, &spec, MomentProbe::None)).unwrap().unwrap();
        let b = with_threads(Some(4), || ensemble_run(&m, &psi, &spec, MomentProbe::None)).unwrap().unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.mean_rho, b.mean_rho);
    }
}

#[test]
fn born_jump_counts_frozen() {
    // damping from |e⟩ jumps at most once per trajectory
    let m = qubit_model(QubitChannel::AmplitudeDamping, 1.0, 0.0, 1.0).unwrap();
    let res = ensemble_run(&m, &qubit::excited(), &small_spec(Scheme::Born), MomentProbe::None).unwrap();
    let last = res.stats.last().unwrap();
    assert!(last.mean_jumps <= 1.0);
    for rec in &res.trajectories {
        assert!(rec.rows.last().unwrap().n_jumps_cum <= 1);
        assert_eq!(rec.rows.len(), 11);
    }
    // 1 − e^{−1} = 0.632; binomial σ over 300 is 0.028
    assert!((last.mean_jumps - 0.632).abs() < 0.09, "{}", last.mean_jumps);
}
