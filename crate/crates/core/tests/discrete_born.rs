//! Ticker-tape branching against the exact total state, Born frequencies,
//! Schmidt rates and sector checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subframe::discrete::{
    branch_schmidt_check, eigenvalue_flow, exact_branch_weights, run_ticker_tape, sample_ticker_path, schmidt_rate_matrix, MeasurementModel,
};
use subframe::ensemble::trajectory_rng;
use subframe::hilbert::{random, CompositeSpace, Operator, StateVector, C64};

#[test]
fn measurement_probabilities_are_born_weights() {
    let mm = MeasurementModel::new(0.3, 1.0, 1.0).unwrap();
    let steps = vec![mm.step().unwrap(); 2];
    let tt = run_ticker_tape(&mm.m0, &steps, 1).unwrap();
    let leaves: Vec<(Vec<usize>, f64)> = tt.tree.leaves().map(|n| (n.label.clone(), n.prob)).collect();
    let want = [(vec![0, 0], 0.09), (vec![0, 1], 0.21), (vec![1, 0], 0.21), (vec![1, 1], 0.49)];
    assert_eq!(leaves.len(), 4);
    for ((l, p), (wl, wp)) in leaves.iter().zip(&want) {
        assert_eq!(l, wl);
        assert!((p - wp).abs() < 1e-12);
    }
    let (norm, orth) = tt.tree.consistency_defects();
    assert!(norm < 1e-12 && orth < 1e-12);
}

#[test]
fn leaf_weights_match_exact_total_state() {
    // c₁² = ½ leaves the environment state degenerate, with no preferred basis
    for c1 in [0.3, 0.62, 0.81] {
        let mm = MeasurementModel::new(c1, 1.3, 0.7).unwrap();
        let steps = vec![mm.step().unwrap(); 4];
        let tt = run_ticker_tape(&mm.m0, &steps, 3).unwrap();
        let exact = exact_branch_weights(&mm.m0, &steps).unwrap();
        let leaves: Vec<_> = tt.tree.leaves().collect();
        assert_eq!(leaves.len(), exact.len());
        for leaf in leaves {
            let w = exact.iter().find(|(l, _)| *l == leaf.label).expect("label present").1;
            assert!((leaf.prob - w).abs() < 1e-9, "{:?}: {} vs {w}", leaf.label, leaf.prob);
        }
    }
}

#[test]
fn sampled_first_outcomes_follow_born_rule() {
    let mm = MeasurementModel::new(0.3, 1.0, 1.0).unwrap();
    let steps = vec![mm.step().unwrap()];
    let n = 4000;
    let hits = (0..n)
        .filter(|&i| {
            let path = sample_ticker_path(&mm.m0, &steps, &mut trajectory_rng(21, i)).unwrap();
            path.last().unwrap().label[0] == 0
        })
        .count();
    let f = hits as f64 / n as f64;
    let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
    assert!((f - 0.3).abs() < 3.0 * sigma, "{f}");
}

#[test]
fn rate_matrix_flow_matches_eigenvalue_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let space = CompositeSpace::bipartite(2, 3).unwrap();
    for _ in 0..5 {
        let h = random::hermitian(6, 1.0, &mut rng);
        let psi = random::state(6, &mut rng);
        let rm = schmidt_rate_matrix(&psi, &h, &space, 1.0).unwrap();
        let eps = 1e-4;
        let fwd = eigenvalue_flow(&psi, &h, &space, 1.0, eps, 1).unwrap();
        let back = eigenvalue_flow(&psi, &h.scale(C64::new(-1.0, 0.0)), &space, 1.0, eps, 1).unwrap();
        for (a, d) in rm.dp_dt().iter().enumerate() {
            let fd = (fwd[1].1[a] - back[1].1[a]) / (2.0 * eps);
            assert!((fd - d).abs() < 1e-6, "{fd} vs {d}");
        }
        // probability conserved: flows antisymmetric
        assert!(rm.dp_dt().iter().sum::<f64>().abs() < 1e-12);
        for a in 0..rm.probs.len() {
            for b in 0..rm.probs.len() {
                assert!((rm.flow[a][b] + rm.flow[b][a]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sector_check_accepts_block_diagonal_and_flags_crossing() {
    let mm = MeasurementModel::new(0.3, 1.0, 1.0).unwrap();
    let sectors = vec![vec![StateVector::basis(2, 0)], vec![StateVector::basis(2, 1)]];
    let ok = branch_schmidt_check(&mm.total_initial(), &mm.h_int, &mm.space, &sectors, 1.0, 1e-9).unwrap();
    assert!(ok.pass && ok.max_cross_coupling < 1e-12);
    let crossing = Operator::from_real_rows(&[&[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]]).unwrap();
    let bad = branch_schmidt_check(&mm.total_initial(), &crossing, &mm.space, &sectors, 1.0, 1e-9).unwrap();
    assert!(!bad.pass);
    // the off-sector block is σ_x, Frobenius norm √2
    assert!((bad.max_cross_coupling - 2f64.sqrt()).abs() < 1e-12);
}
