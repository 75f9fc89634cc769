//! Discrete-time Born unravelling: Kraus channels from system-environment
//! unitaries, the orthogonality fixing of the Kraus basis, ticker-tape branch
//! trees, Schmidt jump rates and super-selection checks.
//!
//! Composite states are ordered system first (slow index), environment second.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    echelon_rotation, hermitian_eigen, matmul, propagator, schmidt_decompose_full, CMatrix, CVector, CompositeSpace, DensityMatrix, Operator,
    StateVector, C64, DEGENERACY_GAP,
};

/// Leaves below this probability are not expanded further.
pub const PRUNE_PROB: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct InteractionStep {
    u: Operator,
    env_dim: usize,
    env_init: StateVector,
}

impl InteractionStep {
    pub fn new(u: Operator, env_dim: usize, env_init: StateVector) -> Result<Self> {
        if env_dim == 0 || !u.dim().is_multiple_of(env_dim) {
            return Err(Error::param("env_dim", format!("does not divide the unitary dimension {}", u.dim())));
        }
        if env_init.dim() != env_dim {
            return Err(Error::DimensionMismatch { expected: env_dim, found: env_init.dim() });
        }
        u.require_unitary(1e-10)?;
        Ok(Self { u, env_dim, env_init: env_init.normalized()? })
    }

    /// Interaction generated by H_I over a time δt.
    pub fn from_hamiltonian(h: &Operator, dt: f64, hbar: f64, env_dim: usize, env_init: StateVector) -> Result<Self> {
        Self::new(propagator(h, dt, hbar)?, env_dim, env_init)
    }

    pub fn unitary(&self) -> &Operator {
        &self.u
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn env_init(&self) -> &StateVector {
        &self.env_init
    }

    pub fn sys_dim(&self) -> usize {
        self.u.dim() / self.env_dim
    }
}

#[derive(Clone, Debug)]
pub struct KrausSet {
    pub ops: Vec<Operator>,
    /// Branch probabilities for the reference state (maximally mixed until a
    /// reference is fixed by [`orthogonality_fix`]).
    pub probs: Vec<f64>,
    /// False when two branch probabilities coincide and the basis was fixed
    /// by convention.
    pub generic: bool,
}

impl KrausSet {
    pub fn new(ops: Vec<Operator>) -> Result<Self> {
        let d = ops.first().map(Operator::dim).ok_or_else(|| Error::param("ops", "empty Kraus set"))?;
        if let Some(o) = ops.iter().find(|o| o.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: o.dim() });
        }
        let mixed = DensityMatrix::maximally_mixed(d);
        let probs = ops.iter().map(|k| branch_prob(k, mixed.mat())).collect();
        Ok(Self { ops, probs, generic: true })
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    /// max |Σ K†K − 1|.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.dim();
        let mut acc = -CMatrix::identity(d, d);
        for k in &self.ops {
            acc += matmul(&k.mat().adjoint(), k.mat());
        }
        acc.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max_ab |Tr(K_a ρ0 K_b†) − p_a δ_ab|.
    pub fn orthogonality_defect(&self, rho0: &DensityMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, ka) in self.ops.iter().enumerate() {
            let kr = matmul(ka.mat(), rho0.mat());
            for (b, kb) in self.ops.iter().enumerate() {
                let g = matmul(&kr, &kb.mat().adjoint()).trace();
                let target = if a == b { self.probs[a] } else { 0.0 };
                worst = worst.max((g - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        for k in &self.ops {
            out += matmul(&matmul(k.mat(), rho), &k.mat().adjoint());
        }
        out
    }
}

fn branch_prob(k: &Operator, rho: &CMatrix) -> f64 {
    matmul(&matmul(k.mat(), rho), &k.mat().adjoint()).trace().re
}

pub fn computational_basis(dim: usize) -> Vec<StateVector> {
    (0..dim).map(|i| StateVector::basis(dim, i)).collect()
}

/// K_a = ⟨E_a|U|E_0⟩ for an orthonormal environment basis {E_a}.
pub fn kraus_from_interaction(step: &InteractionStep, env_basis: &[StateVector]) -> Result<KrausSet> {
    let de = step.env_dim;
    let dm = step.sys_dim();
    if env_basis.len() != de {
        return Err(Error::IncompleteBasis(format!("{} vectors for environment dimension {de}", env_basis.len())));
    }
    for (a, ea) in env_basis.iter().enumerate() {
        if ea.dim() != de {
            return Err(Error::DimensionMismatch { expected: de, found: ea.dim() });
        }
        for (b, eb) in env_basis.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            if (ea.inner(eb) - C64::new(target, 0.0)).norm() > 1e-10 {
                return Err(Error::IncompleteBasis(format!("vectors {a} and {b} are not orthonormal")));
            }
        }
    }
    let u = step.u.mat();
    let e0 = step.env_init.as_slice();
    let ops = env_basis
        .iter()
        .map(|ea| {
            let ea = ea.as_slice();
            Operator::from_matrix(CMatrix::from_fn(dm, dm, |i, j| {
                let mut s = C64::new(0.0, 0.0);
                for e in 0..de {
                    let ce = ea[e].conj();
                    if ce == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for f in 0..de {
                        s += ce * u[(i * de + e, j * de + f)] * e0[f];
                    }
                }
                s
            }))
        })
        .collect();
    KrausSet::new(ops)
}

/// Rotate the Kraus basis so the images K_a|M0⟩ are orthogonal with norms² p_a.
///
/// Branches are ordered by the input index that dominates each new operator,
/// then by decreasing probability. Within degenerate blocks the image span is
/// put in echelon form; each image's largest component is made real positive
/// (operators with null image use their largest matrix entry instead).
pub fn orthogonality_fix(k: &KrausSet, rho0: &DensityMatrix) -> Result<KrausSet> {
    let d = k.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.dim() });
    }
    let purity = rho0.purity();
    if (purity - 1.0).abs() > 1e-10 {
        return Err(Error::NotPure { purity });
    }
    let (_, vecs) = hermitian_eigen(rho0.mat());
    let m0 = vecs.last().expect("nonempty").clone();
    let n = k.ops.len();
    let v: Vec<CVector> = k.ops.iter().map(|o| o.apply(&m0).into_inner()).collect();
    let gram = CMatrix::from_fn(n, n, |i, j| v[i].dotc(&v[j]));
    let (vals, vecs) = hermitian_eigen(&gram);
    let vals: Vec<f64> = vals.into_iter().rev().collect();
    let mut cols: Vec<CVector> = vecs.into_iter().rev().map(StateVector::into_inner).collect();

    let mut generic = true;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && vals[end - 1] - vals[end] < DEGENERACY_GAP {
            end += 1;
        }
        if end - start > 1 {
            if vals[start] > DEGENERACY_GAP {
                generic = false;
            }
            let w = echelon_rotation(&cols[start..end]);
            let old = cols[start..end].to_vec();
            for (c, col) in cols[start..end].iter_mut().enumerate() {
                let mut acc = CVector::zeros(n);
                for (j, o) in old.iter().enumerate() {
                    acc += o * w[(j, c)];
                }
                *col = acc;
            }
        }
        start = end;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&c| (dominant_index(&cols[c]), c));

    let mut ops = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n);
    for &c in &order {
        let col = &cols[c];
        let mut m = CMatrix::zeros(d, d);
        for (a, ka) in k.ops.iter().enumerate() {
            m += ka.mat() * col[a];
        }
        let img = &m * m0.amps();
        let anchor = if img.norm() > 1e-12 {
            img.iter().copied().fold(C64::new(0.0, 0.0), |b, z| if z.norm() > b.norm() + 1e-12 { z } else { b })
        } else {
            m.iter().copied().fold(C64::new(0.0, 0.0), |b, z| if z.norm() > b.norm() + 1e-12 { z } else { b })
        };
        if anchor.norm() > 0.0 {
            m *= anchor.conj() / anchor.norm();
        }
        probs.push(vals[c].max(0.0));
        ops.push(Operator::from_matrix(m));
    }
    Ok(KrausSet { ops, probs, generic })
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchNode {
    /// Outcome indices in chronological order a_1, a_2, …
    pub label: Vec<usize>,
    #[serde(skip)]
    pub state: StateVector,
    pub prob: f64,
    pub parent: Option<usize>,
}

impl BranchNode {
    pub fn depth(&self) -> usize {
        self.label.len()
    }
}

#[derive(Clone, Debug, Default)]
pub struct BranchTree {
    pub nodes: Vec<BranchNode>,
}

impl BranchTree {
    pub fn leaves(&self) -> impl Iterator<Item = &BranchNode> {
        let depth = self.nodes.iter().map(BranchNode::depth).max().unwrap_or(0);
        self.nodes.iter().filter(move |n| n.depth() == depth)
    }

    pub fn children(&self, parent: usize) -> impl Iterator<Item = (usize, &BranchNode)> {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.parent == Some(parent))
    }

    /// Σ over leaves of |state⟩⟨state|.
    pub fn unconditioned(&self) -> CMatrix {
        let d = self.nodes[0].state.dim();
        let mut rho = CMatrix::zeros(d, d);
        for leaf in self.leaves() {
            rho += leaf.state.projector();
        }
        rho
    }

    /// Worst |prob − ⟨state|state⟩| and worst sibling overlap.
    pub fn consistency_defects(&self) -> (f64, f64) {
        let mut norm_def: f64 = 0.0;
        let mut orth_def: f64 = 0.0;
        for (i, n) in self.nodes.iter().enumerate() {
            norm_def = norm_def.max((n.prob - n.state.norm_sqr()).abs());
            let kids: Vec<&BranchNode> = self.children(i).map(|(_, c)| c).collect();
            for (a, ka) in kids.iter().enumerate() {
                for kb in &kids[a + 1..] {
                    orth_def = orth_def.max(ka.state.inner(&kb.state).norm());
                }
            }
        }
        (norm_def, orth_def)
    }
}

#[derive(Clone, Debug)]
pub struct TickerTapeRun {
    pub tree: BranchTree,
    /// Node indices of the sampled trajectory, root first.
    pub path: Vec<usize>,
}

/// First index of the largest-magnitude component (ties within 1e-12 go to
/// the lower index).
fn dominant_index(c: &CVector) -> usize {
    let mut best = 0;
    for i in 1..c.len() {
        if c[i].norm() > c[best].norm() + 1e-12 {
            best = i;
        }
    }
    best
}

/// Kraus set for one branch: extracted in the computational environment basis
/// and fixed against the branch's own normalized state.
fn branch_kraus(step: &InteractionStep, state: &StateVector) -> Result<KrausSet> {
    let k = kraus_from_interaction(step, &computational_basis(step.env_dim))?;
    let rho = DensityMatrix::pure(&state.clone().normalized()?);
    orthogonality_fix(&k, &rho)
}

fn check_steps(m0: &StateVector, steps: &[InteractionStep]) -> Result<()> {
    for s in steps {
        if s.sys_dim() != m0.dim() {
            return Err(Error::DimensionMismatch { expected: m0.dim(), found: s.sys_dim() });
        }
    }
    Ok(())
}

/// Full branch tree of the ticker tape plus one trajectory sampled from it.
pub fn run_ticker_tape(m0: &StateVector, steps: &[InteractionStep], seed: u64) -> Result<TickerTapeRun> {
    check_steps(m0, steps)?;
    let root = m0.clone().normalized()?;
    let mut tree = BranchTree { nodes: vec![BranchNode { label: vec![], state: root, prob: 1.0, parent: None }] };
    let mut frontier = vec![0usize];
    for step in steps {
        let mut next = Vec::new();
        for &pi in &frontier {
            let parent = tree.nodes[pi].clone();
            let k = branch_kraus(step, &parent.state)?;
            for (a, op) in k.ops.iter().enumerate() {
                let state = op.apply(&parent.state);
                let prob = state.norm_sqr();
                if prob < PRUNE_PROB {
                    continue;
                }
                let mut label = parent.label.clone();
                label.push(a);
                tree.nodes.push(BranchNode { label, state, prob, parent: Some(pi) });
                next.push(tree.nodes.len() - 1);
            }
        }
        frontier = next;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = vec![0usize];
    for _ in 0..steps.len() {
        let cur = *path.last().expect("root");
        let kids: Vec<(usize, f64)> = tree.children(cur).map(|(i, n)| (i, n.prob)).collect();
        if kids.is_empty() {
            break;
        }
        let total: f64 = kids.iter().map(|k| k.1).sum();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = kids[kids.len() - 1].0;
        for &(i, p) in &kids {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        path.push(pick);
    }
    Ok(TickerTapeRun { tree, path })
}

/// One trajectory sampled step by step without building the tree.
pub fn sample_ticker_path<R: Rng + ?Sized>(m0: &StateVector, steps: &[InteractionStep], rng: &mut R) -> Result<Vec<BranchNode>> {
    check_steps(m0, steps)?;
    let mut cur = BranchNode { label: vec![], state: m0.clone().normalized()?, prob: 1.0, parent: None };
    let mut path = vec![cur.clone()];
    for step in steps {
        let k = branch_kraus(step, &cur.state)?;
        let imgs: Vec<StateVector> = k.ops.iter().map(|o| o.apply(&cur.state)).collect();
        let u: f64 = rng.random::<f64>() * cur.prob;
        let mut acc = 0.0;
        let mut pick = imgs.len() - 1;
        for (a, img) in imgs.iter().enumerate() {
            acc += img.norm_sqr();
            if u < acc {
                pick = a;
                break;
            }
        }
        let mut label = cur.label.clone();
        label.push(pick);
        let state = imgs[pick].clone();
        cur = BranchNode { label, prob: state.norm_sqr(), state, parent: Some(path.len() - 1) };
        path.push(cur.clone());
    }
    Ok(path)
}

/// Apply `u` on factors (0, k) of a product space with dims `dims`.
fn apply_on_pair(psi: &CVector, dims: &[usize], k: usize, u: &CMatrix) -> CVector {
    let total: usize = dims.iter().product();
    let dm = dims[0];
    let dk = dims[k];
    let inner: usize = dims[k + 1..].iter().product();
    let mid: usize = dims[1..k].iter().product();
    let mut out = CVector::zeros(total);
    // flat = ((m·mid + q)·dk + e)·inner + r
    for q in 0..mid {
        for r in 0..inner {
            let idx = |m: usize, e: usize| ((m * mid + q) * dk + e) * inner + r;
            for m in 0..dm {
                for e in 0..dk {
                    let row = m * dk + e;
                    let mut s = C64::new(0.0, 0.0);
                    for m2 in 0..dm {
                        for e2 in 0..dk {
                            s += u[(row, m2 * dk + e2)] * psi[idx(m2, e2)];
                        }
                    }
                    out[idx(m, e)] = s;
                }
            }
        }
    }
    out
}

/// Exact evolution of M ⊗ E¹ ⊗ … ⊗ Eⁿ with each factor used once.
pub fn ticker_tape_total_state(m0: &StateVector, steps: &[InteractionStep]) -> Result<(StateVector, Vec<usize>)> {
    check_steps(m0, steps)?;
    let mut dims = vec![m0.dim()];
    let mut psi = m0.clone().normalized()?.into_inner();
    for s in steps {
        psi = psi.kronecker(s.env_init.amps());
        dims.push(s.env_dim);
    }
    for (k, s) in steps.iter().enumerate() {
        psi = apply_on_pair(&psi, &dims, k + 1, s.u.mat());
    }
    Ok((StateVector::from_vector(psi), dims))
}

/// Branch weights read directly off the exact total state: the environment
/// factors are resolved one at a time in the eigenbasis of their reduced state
/// (descending), which later interactions never touch. Returns (label, weight)
/// pairs with labels in chronological order. A degenerate reduced state has
/// no preferred eigenbasis, and the weights then depend on the one returned.
pub fn exact_branch_weights(m0: &StateVector, steps: &[InteractionStep]) -> Result<Vec<(Vec<usize>, f64)>> {
    let (psi, dims) = ticker_tape_total_state(m0, steps)?;
    let mut out = Vec::new();
    resolve(psi.into_inner(), dims[0], &dims[1..], Vec::new(), &mut out);
    Ok(out)
}

fn resolve(psi: CVector, dm: usize, env: &[usize], label: Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
    if env.is_empty() {
        out.push((label, psi.norm_squared()));
        return;
    }
    let de = env[0];
    let rest: usize = env[1..].iter().product();
    let at = |m: usize, e: usize, r: usize| (m * de + e) * rest + r;
    let rho = CMatrix::from_fn(de, de, |e, f| {
        let mut s = C64::new(0.0, 0.0);
        for m in 0..dm {
            for r in 0..rest {
                s += psi[at(m, e, r)] * psi[at(m, f, r)].conj();
            }
        }
        s
    });
    let (vals, vecs) = hermitian_eigen(&rho);
    let mut pairs: Vec<(f64, StateVector)> = vals.into_iter().rev().zip(vecs.into_iter().rev()).collect();
    // same labelling as the fixed Kraus sets: by dominant basis component
    pairs.sort_by_key(|(_, phi)| dominant_index(phi.amps()));
    for (a, (val, phi)) in pairs.iter().enumerate() {
        if *val < PRUNE_PROB {
            continue;
        }
        let proj = CVector::from_fn(dm * rest, |i, _| {
            let (m, r) = (i / rest, i % rest);
            (0..de).map(|e| phi.amps()[e].conj() * psi[at(m, e, r)]).sum()
        });
        let mut l = label.clone();
        l.push(a);
        resolve(proj, dm, &env[1..], l, out);
    }
}

#[derive(Clone, Debug)]
pub struct RateMatrix {
    /// Schmidt probabilities p_a, descending.
    pub probs: Vec<f64>,
    /// ω_ab = (1/iħ)⟨M_a|⟨E_a|H_I|M_b⟩|E_b⟩.
    pub omega: CMatrix,
    /// ω_ab − ω_ba (real).
    pub flow: Vec<Vec<f64>>,
    /// r_{b→a} = [ω_ab − ω_ba]^+ / p_b, stored as rates[a][b].
    pub rates: Vec<Vec<f64>>,
    pub generic: bool,
}

impl RateMatrix {
    /// dp_a/dt = Σ_b (ω_ab − ω_ba).
    pub fn dp_dt(&self) -> Vec<f64> {
        self.flow.iter().map(|row| row.iter().sum()).collect()
    }
}

pub fn schmidt_rate_matrix(psi: &StateVector, h_int: &Operator, space: &CompositeSpace, hbar: f64) -> Result<RateMatrix> {
    h_int.require_hermitian()?;
    if h_int.dim() != space.total_dim() {
        return Err(Error::DimensionMismatch { expected: space.total_dim(), found: h_int.dim() });
    }
    let sd = schmidt_decompose_full(psi, space)?;
    let comps: Vec<StateVector> =
        sd.terms.iter().map(|t| StateVector::from_vector(t.left.amps().kronecker(t.right.amps()) * C64::new(t.coefficient, 0.0))).collect();
    let n = comps.len();
    let hc: Vec<StateVector> = comps.iter().map(|c| h_int.apply(c)).collect();
    let i_hbar = C64::new(0.0, hbar);
    let omega = CMatrix::from_fn(n, n, |a, b| comps[a].inner(&hc[b]) / i_hbar);
    let probs: Vec<f64> = sd.terms.iter().map(|t| t.coefficient * t.coefficient).collect();
    let flow: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| (omega[(a, b)] - omega[(b, a)]).re).collect()).collect();
    let rates = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let f = flow[a][b].max(0.0);
                    if f == 0.0 {
                        0.0
                    } else if probs[b] > 0.0 {
                        f / probs[b]
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    Ok(RateMatrix { probs, omega, flow, rates, generic: sd.generic })
}

/// Eigenvalues of M's reduced state (descending) along exact evolution under H.
pub fn eigenvalue_flow(
    psi0: &StateVector,
    h: &Operator,
    space: &CompositeSpace,
    hbar: f64,
    t_final: f64,
    n_steps: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let n_steps = n_steps.max(1);
    let dt = t_final / n_steps as f64;
    let u = propagator(h, dt, hbar)?;
    let mut psi = psi0.clone().normalized()?;
    let mut out = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let sd = schmidt_decompose_full(&psi, space)?;
        out.push((k as f64 * dt, sd.terms.iter().map(|t| t.coefficient * t.coefficient).collect()));
        psi = u.apply(&psi);
    }
    Ok(out)
}

/// Instantaneous-rate jump simulation between Schmidt components: start in the
/// dominant component and jump with probability r_{b→a}·dt per Euler substep.
/// Returns the occupied component index at each time.
#[allow(clippy::too_many_arguments)]
pub fn sample_schmidt_jumps<R: Rng + ?Sized>(
    psi0: &StateVector,
    h: &Operator,
    h_int: &Operator,
    space: &CompositeSpace,
    hbar: f64,
    t_final: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<(f64, usize)>> {
    let n_steps = n_steps.max(1);
    let dt = t_final / n_steps as f64;
    let u = propagator(h, dt, hbar)?;
    let mut psi = psi0.clone().normalized()?;
    let mut cur = 0usize;
    let mut out = vec![(0.0, 0)];
    for k in 1..=n_steps {
        let rm = schmidt_rate_matrix(&psi, h_int, space, hbar)?;
        let x: f64 = rng.random();
        let mut acc = 0.0;
        for a in 0..rm.probs.len() {
            if a == cur {
                continue;
            }
            acc += rm.rates[a][cur] * dt;
            if x < acc {
                cur = a;
                break;
            }
        }
        psi = u.apply(&psi);
        out.push((k as f64 * dt, cur));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SectorReport {
    /// max ‖⟨φ|H_I|χ⟩‖_F / ħ over environment vectors in different sectors.
    pub max_cross_coupling: f64,
    /// max |ω_ab − ω_ba| between branch components in different sectors.
    pub max_cross_flow: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// ⟨φ|H|χ⟩ as an operator on the system factor.
fn env_block(h: &Operator, dm: usize, de: usize, phi: &StateVector, chi: &StateVector) -> CMatrix {
    CMatrix::from_fn(dm, dm, |i, j| {
        let mut s = C64::new(0.0, 0.0);
        for e in 0..de {
            let c = phi.amps()[e].conj();
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for f in 0..de {
                s += c * h.mat()[(i * de + e, j * de + f)] * chi.amps()[f];
            }
        }
        s
    })
}

/// Check that H_I is block diagonal with respect to a partition of the
/// environment into sectors, each given by orthonormal vectors, and that no
/// probability flows between the branch-Schmidt components of different
/// sectors.
pub fn branch_schmidt_check(
    psi: &StateVector,
    h_int: &Operator,
    space: &CompositeSpace,
    sectors: &[Vec<StateVector>],
    hbar: f64,
    threshold: f64,
) -> Result<SectorReport> {
    let dims = space.factor_dims();
    if dims.len() != 2 {
        return Err(Error::param("space", "expected system ⊗ environment"));
    }
    let (dm, de) = (dims[0], dims[1]);
    if h_int.dim() != dm * de {
        return Err(Error::DimensionMismatch { expected: dm * de, found: h_int.dim() });
    }
    let mut coupling: f64 = 0.0;
    for (u, su) in sectors.iter().enumerate() {
        for sv in &sectors[u + 1..] {
            for phi in su {
                for chi in sv {
                    coupling = coupling.max(env_block(h_int, dm, de, phi, chi).norm() / hbar);
                }
            }
        }
    }
    // branch-Schmidt components: project each sector, Schmidt decompose
    let mut comps: Vec<(usize, StateVector)> = Vec::new();
    for (u, su) in sectors.iter().enumerate() {
        let mut proj = CMatrix::zeros(de, de);
        for v in su {
            proj += v.projector();
        }
        let full = CMatrix::identity(dm, dm).kronecker(&proj);
        let branch = StateVector::from_vector(&full * psi.amps());
        if branch.norm_sqr() < PRUNE_PROB {
            continue;
        }
        for t in schmidt_decompose_full(&branch, space)?.terms {
            if t.coefficient * t.coefficient < PRUNE_PROB {
                continue;
            }
            let c = t.left.amps().kronecker(t.right.amps()) * C64::new(t.coefficient, 0.0);
            comps.push((u, StateVector::from_vector(c)));
        }
    }
    let mut flow: f64 = 0.0;
    for (a, (ua, ca)) in comps.iter().enumerate() {
        let hca = h_int.apply(ca);
        for (ub, cb) in &comps[a + 1..] {
            if ua == ub {
                continue;
            }
            // ω_ab − ω_ba = 2 Im⟨a|H|b⟩ / ħ
            let x = cb.inner(&hca).conj();
            flow = flow.max((2.0 * x.im / hbar).abs());
        }
    }
    Ok(SectorReport { max_cross_coupling: coupling, max_cross_flow: flow, threshold, pass: coupling < threshold })
}

/// The two-outcome measurement: a pointer qubit M starts in |0⟩ and measures
/// a qubit c₁|+⟩ + c₂|−⟩ (environment basis |+⟩ = e₀, |−⟩ = e₁) through
/// H_I = g σ_y ⊗ |−⟩⟨−|, which rotates the pointer to an orthogonal state
/// for the |−⟩ component after δt = πħ/2g.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    pub c1_sq: f64,
    pub coupling: f64,
    pub hbar: f64,
    pub h_int: Operator,
    pub space: CompositeSpace,
    pub m0: StateVector,
    pub env_init: StateVector,
}

impl MeasurementModel {
    pub fn new(c1_sq: f64, coupling: f64, hbar: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c1_sq) {
            return Err(Error::param("c1_sq", "must lie in [0, 1]"));
        }
        if !(coupling > 0.0) || !(hbar > 0.0) {
            return Err(Error::param("coupling", "coupling and hbar must be positive"));
        }
        let sy = crate::hilbert::qubit::sigma_y();
        let minus = Operator::real_diagonal(&[0.0, 1.0]);
        let h_int = Operator::from_matrix(sy.mat().kronecker(minus.mat()) * C64::new(coupling, 0.0));
        Ok(Self {
            c1_sq,
            coupling,
            hbar,
            h_int,
            space: CompositeSpace::bipartite(2, 2)?,
            m0: StateVector::basis(2, 0),
            env_init: StateVector::from_real(&[c1_sq.sqrt(), (1.0 - c1_sq).sqrt()]),
        })
    }

    pub fn delta_t(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 * self.hbar / self.coupling
    }

    pub fn total_initial(&self) -> StateVector {
        StateVector::from_vector(self.m0.amps().kronecker(self.env_init.amps()))
    }

    pub fn step(&self) -> Result<InteractionStep> {
        InteractionStep::from_hamiltonian(&self.h_int, self.delta_t(), self.hbar, 2, self.env_init.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_interaction_gives_trivial_kraus() {
        let step = InteractionStep::new(Operator::identity(6), 3, StateVector::basis(3, 0)).unwrap();
        let k = kraus_from_interaction(&step, &computational_basis(3)).unwrap();
        assert!((k.ops[0].mat() - CMatrix::identity(2, 2)).norm() < 1e-15);
        assert!(k.ops[1].max_abs() < 1e-15 && k.ops[2].max_abs() < 1e-15);
    }

    #[test]
    fn cnot_kraus_pair() {
        let cnot = Operator::from_real_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 1.0, 0.0]]).unwrap();
        let step = InteractionStep::new(cnot, 2, StateVector::basis(2, 0)).unwrap();
        let k = kraus_from_interaction(&step, &computational_basis(2)).unwrap();
        assert!((k.ops[0].mat() - Operator::real_diagonal(&[1.0, 0.0]).mat()).norm() < 1e-15);
        assert!((k.ops[1].mat() - Operator::real_diagonal(&[0.0, 1.0]).mat()).norm() < 1e-15);
        assert!(k.completeness_defect() < 1e-15);
    }

    #[test]
    fn measurement_probabilities() {
        let mm = MeasurementModel::new(0.3, 1.0, 1.0).unwrap();
        let k = kraus_from_interaction(&mm.step().unwrap(), &computational_basis(2)).unwrap();
        let fixed = orthogonality_fix(&k, &DensityMatrix::pure(&mm.m0)).unwrap();
        assert!((fixed.probs[0] - 0.3).abs() < 1e-12);
        assert!((fixed.probs[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn incomplete_basis_rejected() {
        let step = InteractionStep::new(Operator::identity(4), 2, StateVector::basis(2, 0)).unwrap();
        let basis = vec![StateVector::basis(2, 0)];
        assert!(matches!(kraus_from_interaction(&step, &basis), Err(Error::IncompleteBasis(_))));
    }
}
