//! Coherent states and phase-space densities (Wigner, Husimi).
//!
//! Conventions: a coherent state of width σ has amplitudes ∝
//! exp(−(x−x0)²/2σ²) e^{ip0x/ħ}, so var_x = σ²/2 and var_p = ħ²/2σ².
//! W(x,p) = (1/2πħ)∫dy ψ(x+y/2)ψ*(x−y/2)e^{−ipy/ħ}, peaking at +p0.
//! Husimi Q(x,p) = |⟨x,p;σ|ψ⟩|²/(2πħ).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid1d;
use crate::hilbert::{CMatrix, CVector, StateVector, C64, ZERO};
use crate::models::KickedRotor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Plane,
    Cylinder,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseGrid {
    pub geometry: Geometry,
    /// x or θ sample points.
    pub q: Vec<f64>,
    /// p or L sample points.
    pub p: Vec<f64>,
    pub dq: f64,
    pub dp: f64,
}

impl PhaseGrid {
    /// Left-endpoint samples of [q_min, q_max) × [p_min, p_max).
    pub fn plane(q_range: (f64, f64), nq: usize, p_range: (f64, f64), np: usize) -> Result<Self> {
        if nq == 0 || np == 0 || !(q_range.1 > q_range.0) || !(p_range.1 > p_range.0) {
            return Err(Error::param("phase_grid", "ranges must be increasing and resolutions positive"));
        }
        let dq = (q_range.1 - q_range.0) / nq as f64;
        let dp = (p_range.1 - p_range.0) / np as f64;
        Ok(Self {
            geometry: Geometry::Plane,
            q: (0..nq).map(|i| q_range.0 + i as f64 * dq).collect(),
            p: (0..np).map(|i| p_range.0 + i as f64 * dp).collect(),
            dq,
            dp,
        })
    }

    /// θ ∈ [0, 2π) with nθ points, L ∈ [L_min, L_max).
    pub fn cylinder(ntheta: usize, l_range: (f64, f64), nl: usize) -> Result<Self> {
        let mut g = Self::plane((0.0, 2.0 * PI), ntheta, l_range, nl)?;
        g.geometry = Geometry::Cylinder;
        Ok(g)
    }

    /// Every position-grid point, and one full Wigner momentum period
    /// [−πħ/2dx, πħ/2dx) sampled with `np` points.
    pub fn wigner_plane(grid: &Grid1d, np: usize) -> Result<Self> {
        let half = 0.5 * grid.p_max();
        let mut g = Self::plane((grid.x()[0], grid.x()[0] + grid.length()), grid.n(), (-half, half), np)?;
        g.q = grid.x().to_vec();
        Ok(g)
    }

    pub fn cell_area(&self) -> f64 {
        self.dq * self.dp
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseField {
    pub grid: PhaseGrid,
    /// values[i][k] at (q_i, p_k).
    pub values: Vec<Vec<f64>>,
}

impl PhaseField {
    pub fn mass(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.grid.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// ∫ W dp at each q.
    pub fn q_marginal(&self) -> Vec<f64> {
        self.values.iter().map(|row| row.iter().sum::<f64>() * self.grid.dp).collect()
    }

    pub fn p_marginal(&self) -> Vec<f64> {
        (0..self.grid.p.len()).map(|k| self.values.iter().map(|row| row[k]).sum::<f64>() * self.grid.dq).collect()
    }

    /// Matrix CSV (rows = q, columns = p) plus a JSON sidecar describing the
    /// grid; returns the two paths written.
    pub fn write(&self, dir: &Path, stem: &str, kind: &str, time: f64) -> Result<Vec<std::path::PathBuf>> {
        let csv = dir.join(format!("{stem}.csv"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv)?);
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| crate::io::fmt_f64(*v)).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        f.flush()?;
        let side = dir.join(format!("{stem}.json"));
        let meta = serde_json::json!({
            "kind": kind,
            "geometry": self.grid.geometry,
            "q_range": [self.grid.q[0], self.grid.q[0] + self.grid.dq * self.grid.q.len() as f64],
            "p_range": [self.grid.p[0], self.grid.p[0] + self.grid.dp * self.grid.p.len() as f64],
            "nq": self.grid.q.len(),
            "np": self.grid.p.len(),
            "time": time,
        });
        std::fs::write(&side, serde_json::to_string_pretty(&meta)?)?;
        Ok(vec![csv, side])
    }
}

fn wrap_centered(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// Coherent state on the periodic grid (minimum-image Gaussian).
pub fn coherent_state(x0: f64, p0: f64, sigma: f64, grid: &Grid1d) -> Result<StateVector> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    let hbar = grid.hbar();
    if sigma < grid.dx() || hbar / sigma > 0.5 * grid.p_max() || 6.0 * sigma > grid.length() {
        return Err(Error::Unresolved(format!("width {sigma} with dx = {}, p_max = {}", grid.dx(), grid.p_max())));
    }
    let l = grid.length();
    grid.state_from_fn(|x| {
        let d = wrap_centered(x - x0, l);
        C64::from_polar((-d * d / (2.0 * sigma * sigma)).exp(), p0 * d / hbar)
    })
}

/// Rotor coherent state c_m ∝ exp(−σ²(m − L0/ħ)²/2) e^{−imθ0}; its angle
/// profile is the wrapped Gaussian of width σ centred at θ0.
pub fn rotor_coherent_state(theta0: f64, l0: f64, sigma: f64, rotor: &KickedRotor) -> Result<StateVector> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    let p = rotor.params();
    let m_max = p.m_max();
    let l = l0 / p.hbar;
    StateVector::new(
        (0..p.dim)
            .map(|i| {
                let m = (i as i64 - m_max) as f64;
                C64::from_polar((-0.5 * sigma * sigma * (m - l).powi(2)).exp(), -m * theta0)
            })
            .collect(),
    )
    .normalized()
}

fn check_band_limit(grid: &Grid1d, momentum_probs: &[f64]) -> Result<()> {
    let half = 0.5 * grid.p_max();
    let outside: f64 = momentum_probs.iter().zip(grid.p()).filter(|(_, &p)| p.abs() >= half).map(|(w, _)| *w).sum();
    if outside > 1e-10 {
        return Err(Error::Unresolved(format!("momentum mass {outside:.3e} beyond p_max/2 would alias in the Wigner transform")));
    }
    Ok(())
}

fn q_indices(grid: &Grid1d, pg: &PhaseGrid) -> Result<Vec<usize>> {
    let x0 = grid.x()[0];
    pg.q.iter()
        .map(|&q| {
            let f = (q - x0) / grid.dx();
            let j = f.round();
            if (f - j).abs() > 1e-9 || j < 0.0 || j >= grid.n() as f64 {
                Err(Error::param("phase_grid", "x samples must lie on the position grid"))
            } else {
                Ok(j as usize)
            }
        })
        .collect()
}

/// Wigner function of a density matrix in grid normalization (Tr ρ = 1):
/// W(x_j, p) = (1/πħ) Σ_k ρ_{j+k, j−k} e^{−2ipk·dx/ħ}, indices periodic.
/// Only minimum-image separations |2k| ≤ n/2 enter (half weight on the
/// edge); summing all k would add a sign-alternating ghost at x + L/2.
pub fn wigner_density(rho: &CMatrix, grid: &Grid1d, pg: &PhaseGrid) -> Result<PhaseField> {
    let n = grid.n();
    if rho.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rho.nrows() });
    }
    // momentum distribution diag(F ρ F†)
    let probs: Vec<f64> = {
        let mut out = vec![0.0; n];
        let mut cols = rho.clone();
        for mut c in cols.column_iter_mut() {
            let mut v: Vec<C64> = c.iter().copied().collect();
            grid.to_momentum(&mut v);
            c.copy_from_slice(&v);
        }
        let mut t = cols.adjoint();
        for mut c in t.column_iter_mut() {
            let mut v: Vec<C64> = c.iter().copied().collect();
            grid.to_momentum(&mut v);
            c.copy_from_slice(&v);
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = t[(k, k)].re;
        }
        out
    };
    check_band_limit(grid, &probs)?;
    let js = q_indices(grid, pg)?;
    let h = grid.hbar();
    let dx = grid.dx();
    let ni = n as i64;
    let values = js
        .iter()
        .map(|&j| {
            let corr: Vec<(f64, C64)> = (-(ni / 4)..=ni / 4)
                .map(|kk| {
                    let a = (j as i64 + kk).rem_euclid(ni) as usize;
                    let b = (j as i64 - kk).rem_euclid(ni) as usize;
                    let w = if 4 * kk.abs() == ni { 0.5 } else { 1.0 };
                    (kk as f64, rho[(a, b)] * w)
                })
                .collect();
            pg.p.iter()
                .map(|&p| {
                    let mut acc = ZERO;
                    for &(kk, c) in &corr {
                        acc += c * C64::from_polar(1.0, -2.0 * p * kk * dx / h);
                    }
                    acc.re / (PI * h)
                })
                .collect()
        })
        .collect();
    Ok(PhaseField { grid: pg.clone(), values })
}

pub fn wigner(psi: &StateVector, grid: &Grid1d, pg: &PhaseGrid) -> Result<PhaseField> {
    if psi.dim() != grid.n() {
        return Err(Error::DimensionMismatch { expected: grid.n(), found: psi.dim() });
    }
    wigner_density(&psi.projector(), grid, pg)
}

/// Husimi function on the plane with coherent states of width σ.
pub fn husimi(psi: &StateVector, grid: &Grid1d, pg: &PhaseGrid, sigma: f64) -> Result<PhaseField> {
    if psi.dim() != grid.n() {
        return Err(Error::DimensionMismatch { expected: grid.n(), found: psi.dim() });
    }
    if pg.geometry != Geometry::Plane {
        return Err(Error::param("phase_grid", "plane geometry required"));
    }
    check_band_limit(grid, &grid.momentum_probabilities(psi.amps()))?;
    if sigma < grid.dx() || grid.hbar() / sigma > 0.5 * grid.p_max() {
        return Err(Error::Unresolved(format!("smoothing width {sigma} not resolved")));
    }
    let h = grid.hbar();
    let l = grid.length();
    // |⟨x0,p0|ψ⟩|² with the Gaussian normalized in grid units
    let norm = (1.0 / (PI.sqrt() * sigma) * grid.dx()).sqrt();
    let values =
        pg.q.iter()
            .map(|&x0| {
                let env: Vec<(f64, f64)> = grid
                    .x()
                    .iter()
                    .map(|&x| {
                        let d = wrap_centered(x - x0, l);
                        (norm * (-d * d / (2.0 * sigma * sigma)).exp(), d)
                    })
                    .collect();
                pg.p.iter()
                    .map(|&p0| {
                        let mut acc = ZERO;
                        for ((g, d), a) in env.iter().zip(psi.as_slice()) {
                            if *g > 1e-18 {
                                acc += a * C64::from_polar(*g, -p0 * d / h);
                            }
                        }
                        acc.norm_sqr() / (2.0 * PI * h)
                    })
                    .collect()
            })
            .collect();
    Ok(PhaseField { grid: pg.clone(), values })
}

/// Husimi function of a rotor state on the cylinder, using coherent states of
/// the same form as [`rotor_coherent_state`] with width σ.
pub fn husimi_cylinder(c: &CVector, rotor: &KickedRotor, pg: &PhaseGrid, sigma: f64) -> Result<PhaseField> {
    if pg.geometry != Geometry::Cylinder {
        return Err(Error::param("phase_grid", "cylinder geometry required"));
    }
    let p = rotor.params();
    if c.len() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, found: c.len() });
    }
    let m_max = p.m_max();
    let norm = (sigma * sigma / PI).powf(0.25);
    let ms: Vec<f64> = (0..p.dim).map(|i| (i as i64 - m_max) as f64).collect();
    // rows θ, columns L
    let gauss: Vec<Vec<f64>> =
        pg.p.iter()
            .map(|&l| {
                let lm = l / p.hbar;
                ms.iter().map(|m| norm * (-0.5 * sigma * sigma * (m - lm).powi(2)).exp()).collect()
            })
            .collect();
    let values =
        pg.q.iter()
            .map(|&th| {
                let phases: Vec<C64> = ms.iter().map(|&m| C64::from_polar(1.0, m * th)).collect();
                gauss
                    .iter()
                    .map(|g| {
                        let mut acc = ZERO;
                        for ((gm, ph), cm) in g.iter().zip(&phases).zip(c.iter()) {
                            if *gm > 1e-18 {
                                acc += ph * cm * *gm;
                            }
                        }
                        acc.norm_sqr() / (2.0 * PI * p.hbar)
                    })
                    .collect()
            })
            .collect();
    Ok(PhaseField { grid: pg.clone(), values })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldMoments {
    /// (⟨q⟩, ⟨p⟩); on the cylinder ⟨q⟩ is the circular mean angle.
    pub mean: [f64; 2],
    /// Covariance matrix; on the cylinder angle deviations are wrapped to
    /// (−π, π] about the circular mean.
    pub cov: [[f64; 2]; 2],
    pub mass: f64,
    /// ⟨e^{iθ}⟩ and ⟨e^{2iθ}⟩ as (re, im); zero on the plane.
    pub trig1: (f64, f64),
    pub trig2: (f64, f64),
}

pub const MIN_FIELD_MASS: f64 = 0.99;

pub fn field_moments(field: &PhaseField) -> Result<FieldMoments> {
    let mass = field.mass();
    if !(mass > MIN_FIELD_MASS) {
        return Err(Error::MassDeficit { mass, minimum: MIN_FIELD_MASS });
    }
    let g = &field.grid;
    let pts = g.q.iter().enumerate().flat_map(|(i, &q)| g.p.iter().enumerate().map(move |(k, &p)| (i, k, q, p)));
    let w = |i: usize, k: usize| field.values[i][k] * g.cell_area() / mass;
    let mut mp = 0.0;
    let (mut c1, mut s1, mut c2, mut s2, mut mq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, k, q, p) in pts.clone() {
        let wt = w(i, k);
        mp += wt * p;
        mq += wt * q;
        c1 += wt * q.cos();
        s1 += wt * q.sin();
        c2 += wt * (2.0 * q).cos();
        s2 += wt * (2.0 * q).sin();
    }
    let cyl = g.geometry == Geometry::Cylinder;
    let q_mean = if cyl { s1.atan2(c1).rem_euclid(2.0 * PI) } else { mq };
    let (mut vqq, mut vqp, mut vpp) = (0.0, 0.0, 0.0);
    for (i, k, q, p) in pts {
        let wt = w(i, k);
        let dq = if cyl { wrap_centered(q - q_mean, 2.0 * PI) } else { q - q_mean };
        let dp = p - mp;
        vqq += wt * dq * dq;
        vqp += wt * dq * dp;
        vpp += wt * dp * dp;
    }
    let (trig1, trig2) = if cyl { ((c1, s1), (c2, s2)) } else { ((0.0, 0.0), (0.0, 0.0)) };
    Ok(FieldMoments { mean: [q_mean, mp], cov: [[vqq, vqp], [vqp, vpp]], mass, trig1, trig2 })
}

/// Angular-momentum and angle moments of a rotor distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RotorMoments {
    pub mean_l: f64,
    pub var_l: f64,
    /// ⟨e^{iθ}⟩ and ⟨e^{2iθ}⟩ as (re, im).
    pub trig1: (f64, f64),
    pub trig2: (f64, f64),
}

impl RotorMoments {
    pub fn of_field(field: &PhaseField) -> Result<Self> {
        let m = field_moments(field)?;
        Ok(Self { mean_l: m.mean[1], var_l: m.cov[1][1], trig1: m.trig1, trig2: m.trig2 })
    }

    pub fn of_points(points: &[(f64, f64)]) -> Self {
        let n = points.len() as f64;
        let mean_l = points.iter().map(|p| p.1).sum::<f64>() / n;
        let var_l = points.iter().map(|p| (p.1 - mean_l).powi(2)).sum::<f64>() / n;
        let avg = |f: &dyn Fn(f64) -> f64| points.iter().map(|p| f(p.0)).sum::<f64>() / n;
        Self { mean_l, var_l, trig1: (avg(&f64::cos), avg(&f64::sin)), trig2: (avg(&|t| (2.0 * t).cos()), avg(&|t| (2.0 * t).sin())) }
    }

    /// Moments after convolving with a rotor coherent state of width σ, the
    /// smoothing that separates a Husimi function from a Wigner function.
    pub fn husimi_smoothed(&self, sigma: f64, hbar: f64) -> Self {
        let d1 = (-sigma * sigma / 4.0).exp();
        let d2 = (-sigma * sigma).exp();
        Self {
            mean_l: self.mean_l,
            var_l: self.var_l + hbar * hbar / (2.0 * sigma * sigma),
            trig1: (self.trig1.0 * d1, self.trig1.1 * d1),
            trig2: (self.trig2.0 * d2, self.trig2.1 * d2),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceRow {
    pub kick: usize,
    pub quantum: RotorMoments,
    pub classical: RotorMoments,
    /// |Δ⟨L⟩|/σ_L, |Δvar L|/var L, |Δ⟨e^{iθ}⟩|, |Δ⟨e^{2iθ}⟩|, quantum side as reference.
    pub deviations: [f64; 4],
    pub max_deviation: f64,
}

/// Kicked-rotor quantum-classical comparison from a coherent state at
/// (θ0, L0) of width σ: the Husimi function of the quantum state against the
/// classical standard-map cloud sampled from the initial Wigner function.
#[allow(clippy::too_many_arguments)]
pub fn rotor_correspondence(
    rotor: &KickedRotor,
    theta0: f64,
    l0: f64,
    sigma: f64,
    n_kicks: usize,
    n_points: usize,
    pg: &PhaseGrid,
    seed: u64,
) -> Result<Vec<CorrespondenceRow>> {
    rotor_correspondence_with(rotor, theta0, l0, sigma, n_kicks, n_points, pg, seed, |_, _, _| Ok(()))
}

/// As [`rotor_correspondence`], handing each kick's Husimi field and classical
/// cloud to `visit`.
#[allow(clippy::too_many_arguments)]
pub fn rotor_correspondence_with(
    rotor: &KickedRotor,
    theta0: f64,
    l0: f64,
    sigma: f64,
    n_kicks: usize,
    n_points: usize,
    pg: &PhaseGrid,
    seed: u64,
    mut visit: impl FnMut(usize, &PhaseField, &[(f64, f64)]) -> Result<()>,
) -> Result<Vec<CorrespondenceRow>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let p = rotor.params().clone();
    if n_points < 2 {
        return Err(Error::param("n_points", "need at least two classical points"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let nth = Normal::new(theta0, sigma / 2f64.sqrt()).map_err(|e| Error::param("sigma", e.to_string()))?;
    let nl = Normal::new(l0, p.hbar / (2f64.sqrt() * sigma)).map_err(|e| Error::param("sigma", e.to_string()))?;
    let mut points: Vec<(f64, f64)> = (0..n_points).map(|_| (nth.sample(&mut rng), nl.sample(&mut rng))).collect();
    let mut c = rotor_coherent_state(theta0, l0, sigma, rotor)?.into_inner();
    let mut rows = Vec::with_capacity(n_kicks + 1);
    for kick in 0..=n_kicks {
        if kick > 0 {
            rotor.step(&mut c);
            for pt in points.iter_mut() {
                *pt = p.classical_step(pt.0, pt.1);
            }
        }
        let field = husimi_cylinder(&c, rotor, pg, sigma)?;
        visit(kick, &field, &points)?;
        let quantum = RotorMoments::of_field(&field)?;
        let classical = RotorMoments::of_points(&points).husimi_smoothed(sigma, p.hbar);
        let cdist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let deviations = [
            (quantum.mean_l - classical.mean_l).abs() / quantum.var_l.sqrt(),
            (quantum.var_l - classical.var_l).abs() / quantum.var_l,
            cdist(quantum.trig1, classical.trig1),
            cdist(quantum.trig2, classical.trig2),
        ];
        let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
        rows.push(CorrespondenceRow { kick, quantum, classical, deviations, max_deviation });
    }
    Ok(rows)
}
