//! Random-instance identity checks shared by the property tests and the
//! acceptance harness. Each returns the worst defect seen.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subframe::born::{assembled_generator, branch_orthogonality_defect, branch_set, completeness_defect, effective_hamiltonian};
use subframe::discrete::{computational_basis, kraus_from_interaction, orthogonality_fix, InteractionStep};
use subframe::hilbert::{max_abs, random, DensityMatrix, C64};
use subframe::lindblad::{liouvillian_apply, rotate_lindblad, shift_lindblad, LindbladModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random model: dimension 2..=6, one to four Lindblad operators, ħ in [0.5, 2].
pub fn random_model(r: &mut ChaCha8Rng) -> LindbladModel {
    let d = r.random_range(2..=6);
    let n = r.random_range(1..=4);
    let hbar = r.random_range(0.5..2.0);
    let h = random::hermitian(d, 1.0, r);
    let ls = (0..n).map(|_| random::operator(d, 0.7, r)).collect();
    LindbladModel::new(h, ls, hbar).unwrap()
}

fn random_interaction(r: &mut ChaCha8Rng) -> InteractionStep {
    let ds = r.random_range(2..=4);
    let de = r.random_range(2..=4);
    let u = random::unitary(ds * de, r);
    let e0 = random::state(de, r);
    InteractionStep::new(u, de, e0).unwrap()
}

/// max ‖Σ K†K − 1‖ for Kraus sets read off random system-environment unitaries.
pub fn kraus_completeness(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let step = random_interaction(&mut r);
            let k = kraus_from_interaction(&step, &computational_basis(step.env_dim())).unwrap();
            k.completeness_defect()
        })
        .fold(0.0, f64::max)
}

/// Orthogonality fixing on random pure states: worst of the fixed set's
/// orthogonality defect, its completeness defect and the change of channel.
pub fn orthogonality_fixing(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let step = random_interaction(&mut r);
            let k = kraus_from_interaction(&step, &computational_basis(step.env_dim())).unwrap();
            let psi = random::state(step.sys_dim(), &mut r);
            let rho0 = DensityMatrix::pure(&psi);
            let fixed = orthogonality_fix(&k, &rho0).unwrap();
            let probe = random::density(step.sys_dim(), step.sys_dim(), &mut r);
            let channel = max_abs(&(fixed.apply(probe.mat()) - k.apply(probe.mat())));
            fixed.orthogonality_defect(&rho0).max(fixed.completeness_defect()).max(channel)
        })
        .fold(0.0, f64::max)
}

/// Branch images: pairwise overlaps relative to their norms, and the rate sum
/// against Σ_i (⟨A_i†A_i⟩ − |⟨A_i⟩|²), which no rotation can change.
pub fn branch_identities(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let m = random_model(&mut r);
            let psi = random::state(m.dim(), &mut r);
            let bs = branch_set(&m, &psi).unwrap();
            let orth = branch_orthogonality_defect(&psi, &bs);
            let mut rate_err: f64 = 0.0;
            for (img, &rate) in bs.images.iter().zip(&bs.rates) {
                rate_err = rate_err.max((img.norm_sqr() - rate).abs());
            }
            let expected: f64 = m
                .lindblads()
                .iter()
                .map(|a| {
                    let v = a.apply(&psi);
                    v.norm_sqr() - psi.inner(&v).norm_sqr()
                })
                .sum();
            let scale = expected.abs().max(1.0);
            orth.max(rate_err / scale).max((bs.total_rate() - expected).abs() / scale)
        })
        .fold(0.0, f64::max)
}

fn scale_of(m: &LindbladModel) -> f64 {
    let mut s = m.hamiltonian().max_abs();
    for a in m.lindblads() {
        s = s.max(a.max_abs().powi(2));
    }
    s.max(1.0)
}

/// H_eff completeness Σ J†J = −(H_eff − H_eff†)/(iħ) and the assembled
/// jump-plus-non-Hermitian generator against the Liouvillian on a random
/// mixed state.
pub fn heff_matching(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let m = random_model(&mut r);
            let psi = random::state(m.dim(), &mut r);
            let bs = branch_set(&m, &psi).unwrap();
            let heff = effective_hamiltonian(&m, &psi, &bs).unwrap();
            let comp = completeness_defect(&m, &bs, &heff);
            let rho = random::density(m.dim(), m.dim(), &mut r);
            let lhs = assembled_generator(&m, &bs, &heff, rho.mat());
            let rhs = liouvillian_apply(&m, rho.mat()).unwrap();
            comp.max(max_abs(&(lhs - rhs))) / scale_of(&m)
        })
        .fold(0.0, f64::max)
}

/// |Tr L(ρ)| and the anti-Hermitian part of L(ρ) on random states.
pub fn trace_preservation(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let m = random_model(&mut r);
            let rank = r.random_range(1..=m.dim());
            let rho = random::density(m.dim(), rank, &mut r);
            let l = liouvillian_apply(&m, rho.mat()).unwrap();
            let herm = max_abs(&(&l - l.adjoint()));
            l.trace().norm().max(herm) / scale_of(&m)
        })
        .fold(0.0, f64::max)
}

/// Shift A → A + λ (with the compensating H) and rotation A → UA leave L unchanged.
pub fn gauge_invariance(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let m = random_model(&mut r);
            let k = m.lindblads().len();
            let lambda: Vec<C64> = (0..k).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
            let u = random::unitary(k, &mut r);
            let shifted = shift_lindblad(&m, &lambda).unwrap();
            let rotated = rotate_lindblad(&m, u.mat()).unwrap();
            let rho = random::density(m.dim(), m.dim(), &mut r);
            let base = liouvillian_apply(&m, rho.mat()).unwrap();
            let a = max_abs(&(liouvillian_apply(&shifted, rho.mat()).unwrap() - &base));
            let b = max_abs(&(liouvillian_apply(&rotated, rho.mat()).unwrap() - &base));
            a.max(b) / scale_of(&shifted)
        })
        .fold(0.0, f64::max)
}
