//! Lindblad master equation: model, generator, RK4 integration and the
//! shift/rotation gauge transforms of the Lindblad operators.

use log::warn;

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eigenvalues, matmul, CMatrix, DensityMatrix, Operator, C64, I, ZERO};

#[derive(Clone, Debug)]
pub struct LindbladModel {
    hamiltonian: Operator,
    lindblads: Vec<Operator>,
    /// Operators whose dissipator is subtracted from the generator. Only the
    /// Caldeira-Leggett truncation uses these; such a model is not of
    /// Lindblad form and cannot be unravelled.
    counterterms: Vec<Operator>,
    hbar: f64,
}

impl LindbladModel {
    pub fn new(hamiltonian: Operator, lindblads: Vec<Operator>, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::param("hbar", "must be positive"));
        }
        hamiltonian.require_hermitian()?;
        let d = hamiltonian.dim();
        for a in &lindblads {
            if a.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: a.dim() });
            }
        }
        Ok(Self { hamiltonian, lindblads, counterterms: Vec::new(), hbar })
    }

    pub fn with_counterterms(mut self, counterterms: Vec<Operator>) -> Result<Self> {
        let d = self.dim();
        for c in &counterterms {
            if c.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: c.dim() });
            }
        }
        self.counterterms = counterterms;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn lindblads(&self) -> &[Operator] {
        &self.lindblads
    }

    pub fn counterterms(&self) -> &[Operator] {
        &self.counterterms
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn is_lindblad_form(&self) -> bool {
        self.counterterms.is_empty()
    }

    pub fn require_lindblad_form(&self) -> Result<()> {
        if self.is_lindblad_form() {
            Ok(())
        } else {
            Err(Error::NotLindbladForm(format!("{} subtracted dissipator(s) present", self.counterterms.len())))
        }
    }

    pub fn liouvillian(&self) -> Liouvillian {
        Liouvillian::new(self)
    }

    /// ‖H‖/ħ + Σ‖A_i‖², with spectral norms bounded by √(‖·‖₁‖·‖∞).
    pub fn spectral_scale(&self) -> f64 {
        let norm = |m: &CMatrix| {
            let n = m.nrows();
            let col = (0..n).map(|j| (0..n).map(|i| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
            let row = (0..n).map(|i| (0..n).map(|j| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
            (col * row).sqrt()
        };
        let mut s = norm(self.hamiltonian.mat()) / self.hbar;
        for a in self.lindblads.iter().chain(&self.counterterms) {
            s += norm(a.mat()).powi(2);
        }
        s
    }
}

/// Pre-assembled generator L(ρ) = (Kρ − ρK†)/(iħ) + Σ AρA† − Σ CρC†, where
/// K = H − (iħ/2)(ΣA†A − ΣC†C).
#[derive(Clone, Debug)]
pub struct Liouvillian {
    k: CMatrix,
    k_adj: CMatrix,
    jumps: Vec<(CMatrix, CMatrix)>,
    counter: Vec<(CMatrix, CMatrix)>,
    hbar: f64,
}

impl Liouvillian {
    pub fn new(model: &LindbladModel) -> Self {
        let half = C64::new(0.0, 0.5 * model.hbar);
        let mut k = model.hamiltonian.mat().clone();
        for a in &model.lindblads {
            k -= matmul(&a.mat().adjoint(), a.mat()) * half;
        }
        for c in &model.counterterms {
            k += matmul(&c.mat().adjoint(), c.mat()) * half;
        }
        let pair = |a: &Operator| (a.mat().clone(), a.mat().adjoint());
        Self {
            k_adj: k.adjoint(),
            k,
            jumps: model.lindblads.iter().map(pair).collect(),
            counter: model.counterterms.iter().map(pair).collect(),
            hbar: model.hbar,
        }
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = (matmul(&self.k, rho) - matmul(rho, &self.k_adj)) * (-I / self.hbar);
        for (a, ad) in &self.jumps {
            out += matmul(&matmul(a, rho), ad);
        }
        for (c, cd) in &self.counter {
            out -= matmul(&matmul(c, rho), cd);
        }
        out
    }
}

/// L(ρ) for a single application.
pub fn liouvillian_apply(model: &LindbladModel, rho: &CMatrix) -> Result<CMatrix> {
    if rho.nrows() != model.dim() || rho.ncols() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho.nrows() });
    }
    Ok(model.liouvillian().apply(rho))
}

pub fn rk4_step(l: &Liouvillian, rho: &CMatrix, dt: f64) -> CMatrix {
    let h = C64::new(dt, 0.0);
    let k1 = l.apply(rho);
    let k2 = l.apply(&(rho + &k1 * (h * 0.5)));
    let k3 = l.apply(&(rho + &k2 * (h * 0.5)));
    let k4 = l.apply(&(rho + &k3 * h));
    rho + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (h / 6.0)
}

#[derive(Clone, Debug)]
pub struct MasterRun {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    /// max |Tr ρ − Tr ρ0| over recorded times.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue seen at any recorded time.
    pub min_eigenvalue: f64,
    /// (t, eigenvalue) wherever the spectrum dipped below −1e-6.
    pub positivity_violations: Vec<(f64, f64)>,
    /// dt times the spectral scale exceeded 0.1.
    pub step_warning: bool,
}

pub const POSITIVITY_TOL: f64 = 1e-6;

/// RK4 integration, recording ρ every `record_every` steps (and at t = 0).
pub fn integrate_master(model: &LindbladModel, rho0: &DensityMatrix, dt: f64, n_steps: usize, record_every: usize) -> Result<MasterRun> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut run = integrate_master_with(model, rho0, dt, n_steps, record_every, |t, rho| {
        times.push(t);
        states.push(rho.clone());
    })?;
    run.times = times;
    run.states = states;
    Ok(run)
}

/// Streaming variant: `visit(t, ρ)` is called at each recorded time and
/// nothing is stored.
pub fn integrate_master_with(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    dt: f64,
    n_steps: usize,
    record_every: usize,
    mut visit: impl FnMut(f64, &CMatrix),
) -> Result<MasterRun> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    let record_every = record_every.max(1);
    let scale = dt * model.spectral_scale();
    let step_warning = scale > 0.1;
    if step_warning {
        warn!("master equation step dt·scale = {scale:.3} exceeds 0.1");
    }
    let l = model.liouvillian();
    let tr0 = rho0.mat().trace().re;
    let mut rho = rho0.mat().clone();
    let mut out = MasterRun {
        times: Vec::new(),
        states: Vec::new(),
        max_trace_drift: 0.0,
        min_eigenvalue: f64::INFINITY,
        positivity_violations: Vec::new(),
        step_warning,
    };
    let mut record = |t: f64, rho: &CMatrix, out: &mut MasterRun| {
        out.max_trace_drift = out.max_trace_drift.max((rho.trace().re - tr0).abs());
        let min = hermitian_eigenvalues(rho).first().copied().unwrap_or(0.0);
        out.min_eigenvalue = out.min_eigenvalue.min(min);
        if min < -POSITIVITY_TOL {
            out.positivity_violations.push((t, min));
        }
        visit(t, rho);
    };
    record(0.0, &rho, &mut out);
    for step in 1..=n_steps {
        rho = rk4_step(&l, &rho, dt);
        if step % record_every == 0 || step == n_steps {
            record(step as f64 * dt, &rho, &mut out);
        }
    }
    if !out.positivity_violations.is_empty() {
        warn!("{} positivity violation(s) below −{POSITIVITY_TOL}", out.positivity_violations.len());
    }
    Ok(out)
}

/// A_i → A_i + λ_i, H → H − (iħ/2)Σ(λ_i* A_i − λ_i A_i†). Leaves L unchanged.
pub fn shift_lindblad(model: &LindbladModel, lambda: &[C64]) -> Result<LindbladModel> {
    let n = model.lindblads.len();
    if lambda.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: lambda.len() });
    }
    let d = model.dim();
    let id = CMatrix::identity(d, d);
    let mut h = model.hamiltonian.mat().clone();
    let mut lindblads = Vec::with_capacity(n);
    for (a, &l) in model.lindblads.iter().zip(lambda) {
        let x = a.mat() * l.conj() - a.mat().adjoint() * l;
        h -= x * C64::new(0.0, 0.5 * model.hbar);
        lindblads.push(Operator::new(a.mat() + &id * l)?);
    }
    // restore exact Hermiticity lost to rounding
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    LindbladModel::new(Operator::new(h)?, lindblads, model.hbar)?.with_counterterms(model.counterterms.clone())
}

/// A_i → Σ_j U_ij A_j for unitary U.
pub fn rotate_lindblad(model: &LindbladModel, u: &CMatrix) -> Result<LindbladModel> {
    let n = model.lindblads.len();
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u.nrows() });
    }
    Operator::new(u.clone())?.require_unitary(1e-10)?;
    let d = model.dim();
    let lindblads = (0..n)
        .map(|i| {
            let mut acc = CMatrix::from_element(d, d, ZERO);
            for j in 0..n {
                acc += model.lindblads[j].mat() * u[(i, j)];
            }
            Operator::new(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    LindbladModel::new(model.hamiltonian.clone(), lindblads, model.hbar)?.with_counterterms(model.counterterms.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{qubit, StateVector};

    #[test]
    fn dephasing_rate_on_coherence() {
        let g: f64 = 0.7;
        let m = LindbladModel::new(Operator::zeros(2), vec![qubit::sigma_z().scale(C64::new(g.sqrt(), 0.0))], 1.0).unwrap();
        let c = C64::new(0.3, -0.1);
        let rho = CMatrix::from_row_slice(2, 2, &[C64::new(0.5, 0.0), c, c.conj(), C64::new(0.5, 0.0)]);
        let l = liouvillian_apply(&m, &rho).unwrap();
        assert!((l[(0, 1)] - c * (-2.0 * g)).norm() < 1e-15);
        assert!(l.trace().norm() < 1e-15);
    }

    #[test]
    fn identity_state_is_stationary_without_dissipation() {
        let h = Operator::from_real_rows(&[&[1.0, 0.3], &[0.3, -0.5]]).unwrap();
        let m = LindbladModel::new(h, vec![], 1.0).unwrap();
        let l = liouvillian_apply(&m, DensityMatrix::maximally_mixed(2).mat()).unwrap();
        assert!(crate::hilbert::max_abs(&l) < 1e-16);
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let m = LindbladModel::new(qubit::sigma_x(), vec![qubit::sigma_minus()], 1.0).unwrap();
        let s = shift_lindblad(&m, &[ZERO]).unwrap();
        assert_eq!(s.hamiltonian(), m.hamiltonian());
        assert_eq!(s.lindblads(), m.lindblads());
    }

    #[test]
    fn unitary_run_keeps_purity() {
        let h = Operator::from_real_rows(&[&[0.4, 1.0], &[1.0, -0.2]]).unwrap();
        let m = LindbladModel::new(h, vec![], 1.0).unwrap();
        let rho0 = DensityMatrix::pure(&StateVector::basis(2, 0));
        let run = integrate_master(&m, &rho0, 1e-3, 3000, 500).unwrap();
        for s in &run.states {
            let p: f64 = s.iter().map(|a| a.norm_sqr()).sum();
            assert!((p - 1.0).abs() < 1e-8);
        }
    }
}
