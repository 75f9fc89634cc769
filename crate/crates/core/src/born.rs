//! Conditioned pure-state dynamics: branch operators from the Gram matrix of
//! the centred Lindblad images, the state-dependent effective Hamiltonian,
//! and the piecewise-deterministic (jump) and diffusive steppers built on it.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::Grid1d;
use crate::hilbert::{echelon_rotation, hermitian_eigen, matmul, CMatrix, CVector, Operator, StateVector, C64, I};
use crate::lindblad::LindbladModel;

/// Relative and absolute cut below which a branch is treated as absent.
pub const RATE_REL_CUTOFF: f64 = 1e-12;
pub const RATE_ABS_CUTOFF: f64 = 1e-14;
/// Largest allowed (total rate)·dt for one jump-process substep.
pub const RATE_DT_FRACTION: f64 = 0.02;
const STEP_WARN: f64 = 0.1;

/// Matrix-free view of a Lindblad model, enough to unravel it.
pub trait OpenSystem: Sync {
    fn dim(&self) -> usize;
    fn hbar(&self) -> f64;
    fn n_lindblads(&self) -> usize;
    fn apply_hamiltonian(&self, psi: &CVector) -> CVector;
    fn apply_lindblad(&self, i: usize, psi: &CVector) -> CVector;
    fn apply_lindblad_adjoint(&self, i: usize, psi: &CVector) -> CVector;

    fn check_unravellable(&self) -> Result<()> {
        Ok(())
    }

    /// One step of the normalized no-jump flow.
    fn flow_step(&self, psi: &StateVector, dt: f64) -> Result<StateVector> {
        heun_flow_step(self, psi, dt)
    }

    /// For translation-covariant models: shift ψ by whole grid cells towards
    /// the origin and return the displacement removed. `None` otherwise.
    fn recenter(&self, _psi: &mut StateVector) -> Option<f64> {
        None
    }
}

impl OpenSystem for LindbladModel {
    fn dim(&self) -> usize {
        LindbladModel::dim(self)
    }

    fn hbar(&self) -> f64 {
        LindbladModel::hbar(self)
    }

    fn n_lindblads(&self) -> usize {
        self.lindblads().len()
    }

    fn apply_hamiltonian(&self, psi: &CVector) -> CVector {
        self.hamiltonian().mat() * psi
    }

    fn apply_lindblad(&self, i: usize, psi: &CVector) -> CVector {
        self.lindblads()[i].mat() * psi
    }

    fn apply_lindblad_adjoint(&self, i: usize, psi: &CVector) -> CVector {
        self.lindblads()[i].mat().ad_mul(psi)
    }

    fn check_unravellable(&self) -> Result<()> {
        self.require_lindblad_form()
    }
}

/// Right-hand side of the normalized no-jump flow,
/// (1/iħ)H_eff ψ + ½ r ψ, written directly in terms of the A_i.
pub fn flow_derivative<S: OpenSystem + ?Sized>(sys: &S, psi: &CVector) -> CVector {
    let mut out = sys.apply_hamiltonian(psi) * (-I / sys.hbar());
    let mut r = 0.0;
    for i in 0..sys.n_lindblads() {
        let ap = sys.apply_lindblad(i, psi);
        let a = psi.dotc(&ap);
        let v = ap - psi * a;
        let w = sys.apply_lindblad_adjoint(i, psi) - psi * a.conj();
        let u = sys.apply_lindblad_adjoint(i, &v) - &v * a.conj();
        out += (&v * a.conj() - w * a - u) * C64::new(0.5, 0.0);
        r += v.norm_squared();
    }
    out += psi * C64::new(0.5 * r, 0.0);
    out
}

/// Second-order (Heun) step of the flow with renormalization.
pub fn heun_flow_step<S: OpenSystem + ?Sized>(sys: &S, psi: &StateVector, dt: f64) -> Result<StateVector> {
    let h = C64::new(dt, 0.0);
    let k1 = flow_derivative(sys, psi.amps());
    let mid = StateVector::from_vector(psi.amps() + &k1 * h).normalized()?;
    let k2 = flow_derivative(sys, mid.amps());
    StateVector::from_vector(psi.amps() + (k1 + k2) * (h * 0.5)).normalized()
}

#[derive(Clone, Debug)]
pub struct BranchSet {
    /// J_k|ψ⟩ for the retained branches, rates descending.
    pub images: Vec<StateVector>,
    pub rates: Vec<f64>,
    /// Full N×N unitary: J_k = Σ_i U_ki (A_i − ⟨A_i⟩). Rows beyond
    /// `images.len()` belong to dropped (numerically zero-rate) branches.
    pub rotation: CMatrix,
    pub mean_a: Vec<C64>,
    /// False when two retained rates are numerically degenerate.
    pub generic: bool,
}

impl BranchSet {
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

pub fn branch_set<S: OpenSystem + ?Sized>(sys: &S, psi: &StateVector) -> Result<BranchSet> {
    sys.check_unravellable()?;
    if psi.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: psi.dim() });
    }
    let n = sys.n_lindblads();
    let mut mean_a = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let ap = sys.apply_lindblad(i, psi.amps());
        let a = psi.amps().dotc(&ap);
        v.push(ap - psi.amps() * a);
        mean_a.push(a);
    }
    if n == 0 {
        return Ok(BranchSet { images: vec![], rates: vec![], rotation: CMatrix::zeros(0, 0), mean_a, generic: true });
    }
    let gram = CMatrix::from_fn(n, n, |i, j| v[i].dotc(&v[j]));
    let (vals, vecs) = hermitian_eigen(&gram);
    // descending
    let vals: Vec<f64> = vals.into_iter().rev().collect();
    let mut cols: Vec<CVector> = vecs.into_iter().rev().map(StateVector::into_inner).collect();

    let top = vals[0].max(0.0);
    let mut generic = true;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && vals[end - 1] - vals[end] <= 1e-8 * top.max(f64::MIN_POSITIVE) {
            end += 1;
        }
        if end - start > 1 {
            if vals[start] > RATE_ABS_CUTOFF {
                generic = false;
            }
            let w = echelon_rotation(&cols[start..end]);
            let old: Vec<CVector> = cols[start..end].to_vec();
            for (k, col) in cols[start..end].iter_mut().enumerate() {
                let mut acc = CVector::zeros(n);
                for (j, o) in old.iter().enumerate() {
                    acc += o * w[(j, k)];
                }
                *col = acc;
            }
        }
        start = end;
    }

    let total: f64 = vals.iter().map(|&l| l.max(0.0)).sum();
    let cut = (RATE_REL_CUTOFF * total).max(RATE_ABS_CUTOFF);
    let mut images = Vec::new();
    let mut rates = Vec::new();
    for (k, col) in cols.iter_mut().enumerate() {
        let mut img = CVector::zeros(psi.dim());
        for (i, vi) in v.iter().enumerate() {
            img += vi * col[i];
        }
        let mut img = StateVector::from_vector(img);
        let ph = img.fix_phase_largest();
        *col *= ph;
        if vals[k] >= cut {
            rates.push(img.norm_sqr());
            images.push(img);
        }
    }
    let rotation = CMatrix::from_fn(n, n, |k, i| cols[k][i]);
    Ok(BranchSet { images, rates, rotation, mean_a, generic })
}

#[derive(Clone, Debug)]
pub struct EffectiveHamiltonianTerms {
    pub hermitian_part: Operator,
    pub anti_hermitian_part: Operator,
}

impl EffectiveHamiltonianTerms {
    pub fn full(&self) -> Operator {
        self.hermitian_part.add(&self.anti_hermitian_part)
    }
}

/// Dense branch operators J_k = Σ_i U_ki (A_i − ⟨A_i⟩), all N of them.
pub fn branch_operators(model: &LindbladModel, bs: &BranchSet) -> Vec<Operator> {
    let n = model.lindblads().len();
    let d = model.dim();
    let id = CMatrix::identity(d, d);
    (0..n)
        .map(|k| {
            let mut acc = CMatrix::zeros(d, d);
            for i in 0..n {
                acc += (model.lindblads()[i].mat() - &id * bs.mean_a[i]) * bs.rotation[(k, i)];
            }
            Operator::new(acc).expect("square")
        })
        .collect()
}

/// H + (iħ/2)Σ_k{⟨(UA)_k†⟩J_k − ⟨(UA)_k⟩J_k† − J_k†J_k}.
pub fn effective_hamiltonian(model: &LindbladModel, psi: &StateVector, bs: &BranchSet) -> Result<EffectiveHamiltonianTerms> {
    model.require_lindblad_form()?;
    if psi.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: psi.dim() });
    }
    let n = model.lindblads().len();
    let js = branch_operators(model, bs);
    let mut h = model.hamiltonian().mat().clone();
    let half = C64::new(0.0, 0.5 * model.hbar());
    for (k, j) in js.iter().enumerate() {
        let ua: C64 = (0..n).map(|i| bs.rotation[(k, i)] * bs.mean_a[i]).sum();
        let jd = j.mat().adjoint();
        let term = j.mat() * ua.conj() - &jd * ua - matmul(&jd, j.mat());
        h += term * half;
    }
    let herm = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let anti = (&h - h.adjoint()) * C64::new(0.5, 0.0);
    Ok(EffectiveHamiltonianTerms { hermitian_part: Operator::new(herm)?, anti_hermitian_part: Operator::new(anti)? })
}

/// max|Σ J†J + (H_eff − H_eff†)/(iħ)|.
pub fn completeness_defect(model: &LindbladModel, bs: &BranchSet, heff: &EffectiveHamiltonianTerms) -> f64 {
    let mut acc = heff.anti_hermitian_part.mat() * (C64::new(2.0, 0.0) / (I * model.hbar()));
    for j in branch_operators(model, bs) {
        acc += matmul(&j.mat().adjoint(), j.mat());
    }
    crate::hilbert::max_abs(&acc)
}

/// (H_eff ρ − ρH_eff†)/(iħ) + Σ J_k ρ J_k†.
pub fn assembled_generator(model: &LindbladModel, bs: &BranchSet, heff: &EffectiveHamiltonianTerms, rho: &CMatrix) -> CMatrix {
    let h = heff.full();
    let mut out = (matmul(h.mat(), rho) - matmul(rho, &h.mat().adjoint())) * (-I / model.hbar());
    for j in branch_operators(model, bs) {
        out += matmul(&matmul(j.mat(), rho), &j.mat().adjoint());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub branch: usize,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: StateVector,
    pub jump: Option<JumpEvent>,
    /// dt·Σr exceeded 0.1 at the start of the step.
    pub step_warning: bool,
}

/// One step of the jump process: a single uniform draw against the cumulative
/// r_k dt decides between jumping to J_kψ/√r_k and the no-jump flow.
pub fn pdp_step<S: OpenSystem + ?Sized, R: Rng + ?Sized>(sys: &S, psi: &StateVector, dt: f64, rng: &mut R) -> Result<StepOutcome> {
    let bs = branch_set(sys, psi)?;
    pdp_step_with(sys, psi, &bs, dt, rng)
}

pub fn pdp_step_with<S: OpenSystem + ?Sized, R: Rng + ?Sized>(
    sys: &S,
    psi: &StateVector,
    bs: &BranchSet,
    dt: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    let total = bs.total_rate();
    let step_warning = total * dt > STEP_WARN;
    if step_warning {
        warn!("jump step dt·Σr = {:.3} exceeds {STEP_WARN}", total * dt);
    }
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (k, (&r, img)) in bs.rates.iter().zip(&bs.images).enumerate() {
        cum += r * dt;
        if u < cum {
            let state = img.scaled(C64::new(1.0 / r.sqrt(), 0.0)).normalized()?;
            return Ok(StepOutcome { state, jump: Some(JumpEvent { branch: k, rate: r }), step_warning });
        }
    }
    Ok(StepOutcome { state: sys.flow_step(psi, dt)?, jump: None, step_warning })
}

/// Jump-process advance over `dt`, split into substeps with Σr·h ≤ 0.02.
pub fn pdp_advance<S: OpenSystem + ?Sized, R: Rng + ?Sized>(
    sys: &S,
    psi: &StateVector,
    dt: f64,
    rng: &mut R,
) -> Result<(StateVector, Vec<JumpEvent>)> {
    let mut state = psi.clone();
    let mut jumps = Vec::new();
    let mut remaining = dt;
    while remaining > 1e-12 * dt {
        let bs = branch_set(sys, &state)?;
        let total = bs.total_rate();
        let mut h = remaining;
        if total * h > RATE_DT_FRACTION {
            h = RATE_DT_FRACTION / total;
        }
        let out = pdp_step_with(sys, &state, &bs, h, rng)?;
        state = out.state;
        if let Some(j) = out.jump {
            jumps.push(j);
        }
        remaining -= h;
    }
    Ok((state, jumps))
}

/// Euler–Maruyama step of the diffusive unravelling: the shared no-jump flow,
/// plus Σ_k J_kψ dW_k with independent real Wiener increments, then
/// renormalization.
pub fn qsd_step<S: OpenSystem + ?Sized, R: Rng + ?Sized>(sys: &S, psi: &StateVector, dt: f64, rng: &mut R) -> Result<StepOutcome> {
    let bs = branch_set(sys, psi)?;
    let total = bs.total_rate();
    let step_warning = total * dt > STEP_WARN;
    if step_warning {
        warn!("diffusion step dt·Σr = {:.3} exceeds {STEP_WARN}", total * dt);
    }
    let mut next = sys.flow_step(psi, dt)?.into_inner();
    let sd = dt.sqrt();
    for img in &bs.images {
        let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
        next += img.amps() * C64::new(dw, 0.0);
    }
    Ok(StepOutcome { state: StateVector::from_vector(next).normalized()?, jump: None, step_warning })
}

#[derive(Clone, Debug)]
pub struct ConditionedIncrement {
    /// Tr(O L(|ψ⟩⟨ψ|)), the ensemble-mean rate of change of ⟨O⟩.
    pub drift: f64,
    /// Change of ⟨O⟩ when branch k fires, ⟨J_k†(O − ⟨O⟩)J_k⟩/r_k.
    pub jump_terms: Vec<f64>,
    /// ⟨J_k†(O − ⟨O⟩)J_k⟩.
    pub jump_weights: Vec<f64>,
    /// Coefficient of dW_k in the diffusive unravelling, 2Re⟨(O − ⟨O⟩)ψ|J_kψ⟩.
    pub qsd_terms: Vec<f64>,
}

impl ConditionedIncrement {
    /// d⟨O⟩/dt between jumps.
    pub fn no_jump_rate(&self) -> f64 {
        self.drift - self.jump_weights.iter().sum::<f64>()
    }

    /// Σ_k r_k·(jump term) + no-jump rate, which must equal the drift.
    pub fn averaged_rate(&self, rates: &[f64]) -> f64 {
        self.no_jump_rate() + rates.iter().zip(&self.jump_terms).map(|(r, j)| r * j).sum::<f64>()
    }
}

pub fn conditioned_increment<S: OpenSystem + ?Sized>(sys: &S, psi: &StateVector, o: &Operator, bs: &BranchSet) -> Result<ConditionedIncrement> {
    o.require_hermitian()?;
    if o.dim() != sys.dim() || psi.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: o.dim() });
    }
    let p = psi.amps();
    let op = o.mat() * p;
    let mean_o = p.dotc(&op).re;
    let hp = sys.apply_hamiltonian(p);
    let mut drift = 2.0 * op.dotc(&hp).im / sys.hbar();
    for i in 0..sys.n_lindblads() {
        let ap = sys.apply_lindblad(i, p);
        let adap = sys.apply_lindblad_adjoint(i, &ap);
        drift += ap.dotc(&(o.mat() * &ap)).re - op.dotc(&adap).re;
    }
    let mut jump_terms = Vec::new();
    let mut jump_weights = Vec::new();
    let mut qsd_terms = Vec::new();
    let centred = &op - p * C64::new(mean_o, 0.0);
    for (img, &r) in bs.images.iter().zip(&bs.rates) {
        let t = img.amps().dotc(&(o.mat() * img.amps())).re - mean_o * r;
        jump_weights.push(t);
        jump_terms.push(t / r);
        qsd_terms.push(2.0 * centred.dotc(img.amps()).re);
    }
    Ok(ConditionedIncrement { drift, jump_terms, jump_weights, qsd_terms })
}

/// d⟨O⟩/dt along the no-jump flow, 2Re⟨Oψ|f(ψ)⟩.
pub fn no_jump_derivative<S: OpenSystem + ?Sized>(sys: &S, psi: &StateVector, o: &Operator) -> f64 {
    let f = flow_derivative(sys, psi.amps());
    2.0 * (o.mat() * psi.amps()).dotc(&f).re
}

/// An observable that can act on states.
pub trait Observable: Sync {
    fn apply(&self, psi: &CVector) -> CVector;

    fn mean(&self, psi: &CVector) -> f64 {
        psi.dotc(&self.apply(psi)).re
    }
}

impl Observable for Operator {
    fn apply(&self, psi: &CVector) -> CVector {
        self.mat() * psi
    }
}

pub struct GridPosition<'a>(pub &'a Grid1d);
pub struct GridMomentum<'a>(pub &'a Grid1d);

impl Observable for GridPosition<'_> {
    fn apply(&self, psi: &CVector) -> CVector {
        self.0.apply_x(psi)
    }
}

impl Observable for GridMomentum<'_> {
    fn apply(&self, psi: &CVector) -> CVector {
        self.0.apply_p(psi)
    }
}

/// Per-branch (γ_x, γ_p): the shift of ⟨x⟩ and ⟨p⟩ when that branch fires.
pub fn jump_displacement_stats(psi: &StateVector, bs: &BranchSet, x: &dyn Observable, p: &dyn Observable) -> Result<Vec<(f64, f64)>> {
    if bs.is_empty() {
        return Err(Error::ZeroRate { branch: 0 });
    }
    let xm = x.mean(psi.amps());
    let pm = p.mean(psi.amps());
    bs.images
        .iter()
        .zip(&bs.rates)
        .enumerate()
        .map(|(k, (img, &r))| {
            if !(r > 0.0) {
                return Err(Error::ZeroRate { branch: k });
            }
            Ok((x.mean(img.amps()) / r - xm, p.mean(img.amps()) / r - pm))
        })
        .collect()
}

/// ⟨ψ|J_k⟩ and ⟨J_j|J_k⟩ − r_k δ_jk, the largest deviation from the branch
/// orthogonality relations.
pub fn branch_orthogonality_defect(psi: &StateVector, bs: &BranchSet) -> f64 {
    let mut d: f64 = 0.0;
    for (k, a) in bs.images.iter().enumerate() {
        d = d.max(psi.inner(a).norm());
        for (j, b) in bs.images.iter().enumerate() {
            let target = if j == k { bs.rates[k] } else { 0.0 };
            d = d.max((a.inner(b) - C64::new(target, 0.0)).norm());
        }
    }
    d
}
