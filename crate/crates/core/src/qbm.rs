//! Quantum Brownian motion of a particle on a periodic grid.
//!
//! A single Lindblad operator A = αx + iβp with α = √(4γmkT/ħ²) and
//! β = √(γ/4mkT), Hamiltonian p²/2m + V(x) + (γ/2)(xp + px). The
//! Caldeira-Leggett limit subtracts the β²D[p] part of the dissipator.

use serde::{Deserialize, Serialize};

use crate::born::OpenSystem;
use crate::error::{Error, Result};
use crate::grid::Grid1d;
use crate::hilbert::{matmul, CMatrix, CVector, DensityMatrix, Operator, StateVector, C64, I};
use crate::lindblad::{LindbladModel, MasterRun};
use crate::models::Potential;

fn default_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QbmParams {
    pub mass: f64,
    pub temperature: f64,
    pub gamma: f64,
    #[serde(default = "default_one")]
    pub kb: f64,
    #[serde(default = "default_one")]
    pub hbar: f64,
    #[serde(default)]
    pub potential: Potential,
    #[serde(default)]
    pub caldeira_leggett: bool,
}

impl QbmParams {
    pub fn new(mass: f64, temperature: f64, gamma: f64) -> Self {
        Self { mass, temperature, gamma, kb: 1.0, hbar: 1.0, potential: Potential::Free, caldeira_leggett: false }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mass", self.mass), ("temperature", self.temperature), ("gamma", self.gamma), ("kb", self.kb), ("hbar", self.hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        self.potential.validate()
    }

    pub fn kt(&self) -> f64 {
        self.kb * self.temperature
    }

    pub fn alpha(&self) -> f64 {
        (4.0 * self.gamma * self.mass * self.kt()).sqrt() / self.hbar
    }

    pub fn beta(&self) -> f64 {
        (self.gamma / (4.0 * self.mass * self.kt())).sqrt()
    }

    /// ħ/√(mkT)
    pub fn thermal_length(&self) -> f64 {
        self.hbar / (self.mass * self.kt()).sqrt()
    }

    /// Amplitude width σ of the A-eigenstates, ψ ∝ exp(−(x−x0)²/2σ²).
    pub fn coherent_sigma(&self) -> f64 {
        self.hbar / (2.0 * (self.mass * self.kt()).sqrt())
    }

    pub fn thermal(&self) -> crate::models::ThermalParams {
        crate::models::ThermalParams { mass: self.mass, kt: self.kt(), gamma: self.gamma, hbar: self.hbar }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct QbmModel {
    pub params: QbmParams,
    pub grid: Grid1d,
    pub model: LindbladModel,
    pub x: Operator,
    pub p: Operator,
    /// The Lindblad operator itself, also held by `model` in the full case.
    pub a: Operator,
}

/// Build the dense model and x, p operators on the grid. The grid must resolve
/// the thermal length ħ/√(mkT) with at least two points and span four of it.
pub fn build_qbm(params: &QbmParams, spec: &GridSpec) -> Result<QbmModel> {
    params.validate()?;
    if spec.n < 16 {
        return Err(Error::param("grid.n", "must be at least 16"));
    }
    let grid = Grid1d::new(spec.n, spec.length, params.hbar)?;
    let lt = params.thermal_length();
    if grid.dx() > 0.5 * lt || grid.length() < 4.0 * lt {
        return Err(Error::Unresolved(format!("grid (dx = {:.4}, L = {:.4}) cannot hold thermal length {lt:.4}", grid.dx(), grid.length())));
    }
    let x = grid.x_operator();
    let p = grid.p_operator();
    let m = params.mass;
    let kinetic = grid.momentum_operator_fn(|q| q * q / (2.0 * m));
    let v = Operator::real_diagonal(&grid.x().iter().map(|&xx| params.potential.value(xx)).collect::<Vec<_>>());
    let xp = matmul(x.mat(), p.mat());
    let px = matmul(p.mat(), x.mat());
    let mut h = kinetic.mat() + v.mat() + (xp + px) * C64::new(0.5 * params.gamma, 0.0);
    h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let a = Operator::new(x.mat() * C64::new(params.alpha(), 0.0) + p.mat() * (I * params.beta()))?;
    let mut model = LindbladModel::new(Operator::new(h)?, vec![a.clone()], params.hbar)?;
    if params.caldeira_leggett {
        model = model.with_counterterms(vec![p.scale(C64::new(params.beta(), 0.0))])?;
    }
    Ok(QbmModel { params: params.clone(), grid, model, x, p, a })
}

impl QbmModel {
    /// Eigenstate of A centred at (x0, p0).
    pub fn coherent_state(&self, x0: f64, p0: f64) -> Result<StateVector> {
        crate::phase::coherent_state(x0, p0, self.params.coherent_sigma(), &self.grid)
    }

    pub fn system(&self) -> QbmSystem {
        QbmSystem::new(&self.params, self.grid.clone())
    }
}

/// Matrix-free QBM generator on the grid. Its no-jump flow uses a symmetric
/// split: exact position- and momentum-diagonal factors around a Heun step of
/// the centred squeeze term (γ/2){x−x̄, p−p̄}.
#[derive(Clone, Debug)]
pub struct QbmSystem {
    grid: Grid1d,
    mass: f64,
    gamma: f64,
    hbar: f64,
    alpha: f64,
    beta: f64,
    potential: Potential,
    v: Vec<f64>,
    caldeira_leggett: bool,
}

impl QbmSystem {
    pub fn new(params: &QbmParams, grid: Grid1d) -> Self {
        let v = grid.x().iter().map(|&x| params.potential.value(x)).collect();
        Self {
            mass: params.mass,
            gamma: params.gamma,
            hbar: params.hbar,
            alpha: params.alpha(),
            beta: params.beta(),
            potential: params.potential.clone(),
            v,
            caldeira_leggett: params.caldeira_leggett,
            grid,
        }
    }

    pub fn grid(&self) -> &Grid1d {
        &self.grid
    }

    fn mean_p(&self, psi: &CVector) -> f64 {
        let probs = self.grid.momentum_probabilities(psi);
        probs.iter().zip(self.grid.p()).map(|(w, p)| w * p).sum::<f64>() / probs.iter().sum::<f64>()
    }

    fn x_factor(&self, psi: &mut CVector, h: f64) {
        let norm = psi.norm_squared();
        let xm = self.grid.mean_x(psi) / norm;
        let pm = self.mean_p(psi);
        let (hb, a2) = (self.hbar, self.alpha * self.alpha);
        for ((c, &x), &v) in psi.iter_mut().zip(self.grid.x()).zip(&self.v) {
            let dx = x - xm;
            let phase = -h / hb * (v + 2.0 * self.gamma * pm * x);
            *c *= C64::from_polar((-0.5 * h * a2 * dx * dx).exp(), phase);
        }
    }

    fn p_factor(&self, psi: &mut CVector, h: f64) {
        let g = &self.grid;
        let buf = psi.as_mut_slice();
        g.to_momentum(buf);
        let mut w = 0.0;
        let mut pm = 0.0;
        for (c, &p) in buf.iter().zip(g.p()) {
            w += c.norm_sqr();
            pm += c.norm_sqr() * p;
        }
        pm /= w;
        let (hb, b2, m) = (self.hbar, self.beta * self.beta, self.mass);
        for (c, &p) in buf.iter_mut().zip(g.p()) {
            let dp = p - pm;
            *c *= C64::from_polar((-0.5 * h * b2 * dp * dp).exp(), -h / hb * p * p / (2.0 * m));
        }
        g.to_position(buf);
    }

    /// (−i/ħ)(γ/2){X, P}ψ with X = x − xm, P = p − pm.
    fn squeeze(&self, psi: &CVector, xm: f64, pm: f64) -> CVector {
        let g = &self.grid;
        let xs = CVector::from_fn(psi.len(), |j, _| psi[j] * (g.x()[j] - xm));
        let pp = g.apply_p(psi) - psi * C64::new(pm, 0.0);
        let xpp = CVector::from_fn(psi.len(), |j, _| pp[j] * (g.x()[j] - xm));
        let pxs = g.apply_p(&xs) - &xs * C64::new(pm, 0.0);
        (xpp + pxs) * (-I * (0.5 * self.gamma / self.hbar))
    }

    fn squeeze_step(&self, psi: &mut CVector, h: f64) {
        let norm = psi.norm_squared();
        let xm = self.grid.mean_x(psi) / norm;
        let pm = self.mean_p(psi);
        let k1 = self.squeeze(psi, xm, pm);
        let mid = &*psi + &k1 * C64::new(h, 0.0);
        let k2 = self.squeeze(&mid, xm, pm);
        *psi += (k1 + k2) * C64::new(0.5 * h, 0.0);
    }
}

fn renorm(psi: &mut CVector) -> Result<()> {
    let n = psi.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::NumericalContract(format!("flow produced norm {n}")));
    }
    psi.unscale_mut(n);
    Ok(())
}

impl OpenSystem for QbmSystem {
    fn dim(&self) -> usize {
        self.grid.n()
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn n_lindblads(&self) -> usize {
        1
    }

    fn apply_hamiltonian(&self, psi: &CVector) -> CVector {
        let g = &self.grid;
        let m = self.mass;
        let kin = g.apply_momentum_fn(psi, |p| C64::new(p * p / (2.0 * m), 0.0));
        let pp = g.apply_p(psi);
        let xs = g.apply_x(psi);
        let pxs = g.apply_p(&xs);
        let xpp = g.apply_x(&pp);
        let pot = CVector::from_fn(psi.len(), |j, _| psi[j] * self.v[j]);
        kin + pot + (xpp + pxs) * C64::new(0.5 * self.gamma, 0.0)
    }

    fn apply_lindblad(&self, _i: usize, psi: &CVector) -> CVector {
        self.grid.apply_x(psi) * C64::new(self.alpha, 0.0) + self.grid.apply_p(psi) * (I * self.beta)
    }

    fn apply_lindblad_adjoint(&self, _i: usize, psi: &CVector) -> CVector {
        self.grid.apply_x(psi) * C64::new(self.alpha, 0.0) - self.grid.apply_p(psi) * (I * self.beta)
    }

    fn check_unravellable(&self) -> Result<()> {
        if self.caldeira_leggett {
            return Err(Error::NotLindbladForm("Caldeira-Leggett truncation".into()));
        }
        Ok(())
    }

    fn flow_step(&self, psi: &StateVector, dt: f64) -> Result<StateVector> {
        let mut v = psi.amps().clone();
        self.x_factor(&mut v, 0.5 * dt);
        renorm(&mut v)?;
        self.p_factor(&mut v, 0.5 * dt);
        renorm(&mut v)?;
        self.squeeze_step(&mut v, dt);
        renorm(&mut v)?;
        self.p_factor(&mut v, 0.5 * dt);
        renorm(&mut v)?;
        self.x_factor(&mut v, 0.5 * dt);
        renorm(&mut v)?;
        Ok(StateVector::from_vector(v))
    }

    fn recenter(&self, psi: &mut StateVector) -> Option<f64> {
        if self.potential != Potential::Free {
            return None;
        }
        let xm = self.grid.mean_x(psi.amps());
        let cells = (xm / self.grid.dx()).round() as i64;
        if cells == 0 {
            return Some(0.0);
        }
        let n = self.grid.n() as i64;
        let old = psi.amps().clone();
        let amps = psi.amps_mut();
        for j in 0..n {
            amps[j as usize] = old[(j + cells).rem_euclid(n) as usize];
        }
        Some(cells as f64 * self.grid.dx())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub tr: f64,
    pub purity: f64,
    pub ex: f64,
    pub ep: f64,
    pub var_x: f64,
    pub var_p: f64,
}

pub fn density_moments(qbm: &QbmModel, t: f64, rho: &CMatrix) -> MomentRow {
    let d = DensityMatrix::from_matrix_unchecked(rho.clone());
    let tr = d.trace();
    let ex = d.expectation(&qbm.x).re / tr;
    let ep = d.expectation(&qbm.p).re / tr;
    let x2 = d.expectation(&qbm.x.compose(&qbm.x)).re / tr;
    let p2 = d.expectation(&qbm.p.compose(&qbm.p)).re / tr;
    MomentRow { t, tr, purity: d.purity(), ex, ep, var_x: x2 - ex * ex, var_p: p2 - ep * ep }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub times: Vec<f64>,
    pub fd_dx: Vec<f64>,
    pub pred_dx: Vec<f64>,
    pub fd_dp: Vec<f64>,
    pub pred_dp: Vec<f64>,
    /// Largest |fd − pred| relative to the largest |pred| in the series.
    pub max_rel_residual_x: f64,
    pub max_rel_residual_p: f64,
}

/// Compare central differences of ⟨x⟩, ⟨p⟩ with ⟨p⟩/m and −⟨V′⟩ − 2γ⟨p⟩.
pub fn unconditioned_moments(run: &MasterRun, qbm: &QbmModel) -> Result<MomentCheck> {
    if run.states.len() < 3 {
        return Err(Error::param("run", "need at least three recorded states"));
    }
    if run.states[0].nrows() != qbm.grid.n() {
        return Err(Error::DimensionMismatch { expected: qbm.grid.n(), found: run.states[0].nrows() });
    }
    let vp: Vec<f64> = qbm.grid.x().iter().map(|&x| qbm.params.potential.gradient(x)).collect();
    let mut ex = Vec::new();
    let mut ep = Vec::new();
    let mut evp = Vec::new();
    for rho in &run.states {
        let tr = rho.trace().re;
        ex.push((0..vp.len()).map(|j| rho[(j, j)].re * qbm.grid.x()[j]).sum::<f64>() / tr);
        evp.push((0..vp.len()).map(|j| rho[(j, j)].re * vp[j]).sum::<f64>() / tr);
        ep.push(crate::hilbert::trace_of_product(rho, qbm.p.mat()).re / tr);
    }
    let (m, g) = (qbm.params.mass, qbm.params.gamma);
    let mut out = MomentCheck {
        times: vec![],
        fd_dx: vec![],
        pred_dx: vec![],
        fd_dp: vec![],
        pred_dp: vec![],
        max_rel_residual_x: 0.0,
        max_rel_residual_p: 0.0,
    };
    for k in 1..run.states.len() - 1 {
        let span = run.times[k + 1] - run.times[k - 1];
        out.times.push(run.times[k]);
        out.fd_dx.push((ex[k + 1] - ex[k - 1]) / span);
        out.pred_dx.push(ep[k] / m);
        out.fd_dp.push((ep[k + 1] - ep[k - 1]) / span);
        out.pred_dp.push(-evp[k] - 2.0 * g * ep[k]);
    }
    let rel = |fd: &[f64], pred: &[f64]| {
        let scale = pred.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        fd.iter().zip(pred).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
    };
    out.max_rel_residual_x = rel(&out.fd_dx, &out.pred_dx);
    out.max_rel_residual_p = rel(&out.fd_dp, &out.pred_dp);
    Ok(out)
}
