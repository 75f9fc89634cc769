//! Classical Brownian motion: Langevin ensembles, Fokker-Planck moment checks
//! and the comparison against conditioned quantum ensembles.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Potential;
use crate::stats::NeumaierSum;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinParams {
    pub mass: f64,
    pub gamma: f64,
    pub kt: f64,
    #[serde(default)]
    pub potential: Potential,
    pub dt: f64,
    /// Leapfrog for the conservative drift instead of plain Euler.
    #[serde(default)]
    pub symplectic: bool,
    /// Amplitude of an optional position noise term; zero drops it.
    #[serde(default)]
    pub position_noise: f64,
}

impl LangevinParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::param("mass", "must be positive"));
        }
        if !(self.gamma >= 0.0) || !(self.kt >= 0.0) || !(self.position_noise >= 0.0) {
            return Err(Error::param("gamma", "gamma, kt and position_noise must be nonnegative"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        self.potential.validate()
    }

    /// √(4γmkT), the momentum noise amplitude.
    pub fn noise_amplitude(&self) -> f64 {
        (4.0 * self.gamma * self.mass * self.kt).sqrt()
    }
}

/// Points with one random stream each, so evolution does not depend on how
/// points are split across workers.
#[derive(Clone, Debug)]
pub struct ClassicalEnsemble {
    pub points: Vec<(f64, f64)>,
    rngs: Vec<ChaCha8Rng>,
    pub t: f64,
}

pub fn point_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

impl ClassicalEnsemble {
    pub fn new(points: Vec<(f64, f64)>, seed: u64) -> Self {
        let rngs = (0..points.len() as u64).map(|i| point_rng(seed, i)).collect();
        Self { points, rngs, t: 0.0 }
    }

    /// Independent Gaussian (x, p) samples with the given means and variances.
    pub fn gaussian(n: usize, mean: (f64, f64), var: (f64, f64), seed: u64) -> Self {
        let mut ens = Self::new(vec![(0.0, 0.0); n], seed);
        for (pt, rng) in ens.points.iter_mut().zip(&mut ens.rngs) {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            *pt = (mean.0 + var.0.sqrt() * a, mean.1 + var.1.sqrt() * b);
        }
        ens
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn moments(&self) -> ClassicalMoments {
        ClassicalMoments::of(self.t, &self.points)
    }
}

/// Advance every point by one step of dt.
pub fn langevin_step(ens: &mut ClassicalEnsemble, params: &LangevinParams) -> Result<bool> {
    params.validate()?;
    let warn_step = params.dt * params.gamma > 0.05;
    if warn_step {
        warn!("Langevin step dt·γ = {:.3} exceeds 0.05", params.dt * params.gamma);
    }
    let (m, g, dt) = (params.mass, params.gamma, params.dt);
    let amp = params.noise_amplitude() * dt.sqrt();
    let xamp = params.position_noise * dt.sqrt();
    let pot = &params.potential;
    let symplectic = params.symplectic;
    ens.points.par_iter_mut().zip(ens.rngs.par_iter_mut()).for_each(|(pt, rng)| {
        let (x, p) = *pt;
        let xi: f64 = rng.sample(StandardNormal);
        let (x1, p1) = if symplectic {
            let ph = p - 0.5 * dt * pot.gradient(x);
            let x1 = x + dt * ph / m;
            let p1 = ph - 0.5 * dt * pot.gradient(x1);
            (x1, p1 - 2.0 * g * p * dt + amp * xi)
        } else {
            (x + dt * p / m, p + dt * (-pot.gradient(x) - 2.0 * g * p) + amp * xi)
        };
        let x1 = if xamp > 0.0 {
            let eta: f64 = rng.sample(StandardNormal);
            x1 + xamp * eta
        } else {
            x1
        };
        *pt = (x1, p1);
    });
    ens.t += dt;
    Ok(warn_step)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassicalMoments {
    pub t: f64,
    pub count: usize,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl ClassicalMoments {
    pub fn of(t: f64, pts: &[(f64, f64)]) -> Self {
        let n = pts.len() as f64;
        let mut sx = NeumaierSum::default();
        let mut sp = NeumaierSum::default();
        for &(x, p) in pts {
            sx.add(x);
            sp.add(p);
        }
        let (mx, mp) = (sx.value() / n, sp.value() / n);
        let (mut vxx, mut vpp, mut vxp) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
        for &(x, p) in pts {
            vxx.add((x - mx) * (x - mx));
            vpp.add((p - mp) * (p - mp));
            vxp.add((x - mx) * (p - mp));
        }
        let dof = (n - 1.0).max(1.0);
        Self { t, count: pts.len(), mean_x: mx, mean_p: mp, var_x: vxx.value() / dof, var_p: vpp.value() / dof, cov_xp: vxp.value() / dof }
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FpInterval {
    pub t0: f64,
    pub t1: f64,
    pub dmean_p_emp: f64,
    pub dmean_p_pred: f64,
    pub z_mean: f64,
    pub dvar_p_emp: f64,
    pub dvar_p_pred: f64,
    pub z_var: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FpReport {
    pub intervals: Vec<FpInterval>,
    pub max_abs_z: f64,
    pub pass: bool,
}

fn rates(p: &(f64, f64, &LangevinParams), pts: &[(f64, f64)]) -> (f64, f64) {
    let (m, kt, params) = *p;
    let c = ClassicalMoments::of(0.0, pts);
    let k = params.potential.stiffness().unwrap_or(0.0);
    let g = params.gamma;
    // d⟨p⟩/dt = −k⟨x⟩ − 2γ⟨p⟩ ; dVar(p)/dt = −4γVar(p) + 4γmkT − 2k Cov(x,p)
    (-k * c.mean_x - 2.0 * g * c.mean_p, -4.0 * g * c.var_p + 4.0 * g * m * kt - 2.0 * k * c.cov_xp)
}

/// Compare per-interval changes of ⟨p⟩ and Var(p) between consecutive
/// snapshots of the same points with the Fokker-Planck moment equations
/// (trapezoidal in time), in units of the empirical standard error.
pub fn fokker_planck_moment_check(snaps: &[Snapshot], params: &LangevinParams) -> Result<FpReport> {
    if !params.potential.has_closed_moments() {
        return Err(Error::UnsupportedPotential(params.potential.label().to_string()));
    }
    if snaps.len() < 2 {
        return Err(Error::param("snapshots", "need at least two"));
    }
    let ctx = (params.mass, params.kt, params);
    let mut intervals = Vec::new();
    let mut max_abs_z: f64 = 0.0;
    for w in snaps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.points.len() != b.points.len() || a.points.len() < 2 {
            return Err(Error::param("snapshots", "snapshots must hold the same points"));
        }
        let n = a.points.len() as f64;
        let dt = b.t - a.t;
        let (ra, va) = rates(&ctx, &a.points);
        let (rb, vb) = rates(&ctx, &b.points);
        let ma = ClassicalMoments::of(a.t, &a.points);
        let mb = ClassicalMoments::of(b.t, &b.points);
        let dp: Vec<f64> = a.points.iter().zip(&b.points).map(|(u, v)| v.1 - u.1).collect();
        let mdp = dp.iter().sum::<f64>() / n;
        let se_mean = (dp.iter().map(|d| (d - mdp).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let y: Vec<f64> = a.points.iter().zip(&b.points).map(|(u, v)| (v.1 - mb.mean_p).powi(2) - (u.1 - ma.mean_p).powi(2)).collect();
        let my = y.iter().sum::<f64>() / n;
        let se_var = (y.iter().map(|d| (d - my).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let dmean_p_pred = 0.5 * (ra + rb) * dt;
        let dvar_p_pred = 0.5 * (va + vb) * dt;
        let z = |emp: f64, pred: f64, se: f64| {
            if se > 0.0 {
                (emp - pred) / se
            } else if emp == pred {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let iv = FpInterval {
            t0: a.t,
            t1: b.t,
            dmean_p_emp: mdp,
            dmean_p_pred,
            z_mean: z(mdp, dmean_p_pred, se_mean),
            dvar_p_emp: mb.var_p - ma.var_p,
            dvar_p_pred,
            z_var: z(mb.var_p - ma.var_p, dvar_p_pred, se_var),
        };
        max_abs_z = max_abs_z.max(iv.z_mean.abs()).max(iv.z_var.abs());
        intervals.push(iv);
    }
    Ok(FpReport { intervals, max_abs_z, pass: max_abs_z <= 3.0 })
}

/// Ensemble statistics of the conditioned quantum expectations at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumMoments {
    pub t: f64,
    pub count: usize,
    /// Mean and variance over trajectories of ⟨x⟩ and ⟨p⟩.
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeTolerances {
    /// Allowed relative difference of fitted Var(p) growth rates.
    pub slope_rel: f64,
    /// Absolute slack on ensemble means, added to four standard errors.
    pub mean_abs: f64,
}

impl Default for BridgeTolerances {
    fn default() -> Self {
        Self { slope_rel: 0.15, mean_abs: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BridgeRow {
    pub t: f64,
    pub d_mean_x: f64,
    pub d_mean_p: f64,
    pub d_var_p: f64,
    /// d_var_p over its combined standard error.
    pub z_var_p: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BridgeReport {
    pub rows: Vec<BridgeRow>,
    /// Fitted D in Var(t) = Var(0)e^{−4γt} + D(1 − e^{−4γt})/4γ.
    pub slope_quantum: f64,
    pub slope_classical: f64,
    pub slope_expected: f64,
    pub slope_rel_diff: f64,
    pub means_ok: bool,
    pub slope_ok: bool,
    pub pass: bool,
}

/// Least-squares growth rate D of a variance series relaxing at rate 4γ.
pub fn fit_diffusion(times: &[f64], var: &[f64], gamma: f64) -> f64 {
    let t0 = times[0];
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, &v) in times.iter().zip(var) {
        let s = t - t0;
        let (f, decay) = if gamma > 0.0 { ((1.0 - (-4.0 * gamma * s).exp()) / (4.0 * gamma), (-4.0 * gamma * s).exp()) } else { (s, 1.0) };
        let y = v - var[0] * decay;
        num += y * f;
        den += f * f;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn moment_bridge(
    quantum: &[QuantumMoments],
    classical: &[ClassicalMoments],
    gamma: f64,
    mass: f64,
    kt: f64,
    tol: &BridgeTolerances,
) -> Result<BridgeReport> {
    if quantum.len() != classical.len() || quantum.is_empty() {
        return Err(Error::MismatchedTimes(format!("{} quantum vs {} classical records", quantum.len(), classical.len())));
    }
    for (q, c) in quantum.iter().zip(classical) {
        if (q.t - c.t).abs() > 1e-9 * q.t.abs().max(1.0) {
            return Err(Error::MismatchedTimes(format!("t = {} vs {}", q.t, c.t)));
        }
    }
    let se_var = |v: f64, n: usize| v * (2.0 / (n.max(2) - 1) as f64).sqrt();
    let mut means_ok = true;
    let rows = quantum
        .iter()
        .zip(classical)
        .map(|(q, c)| {
            let dmx = q.mean_x - c.mean_x;
            let dmp = q.mean_p - c.mean_p;
            let se_x = (q.var_x / q.count as f64 + c.var_x / c.count as f64).sqrt();
            let se_p = (q.var_p / q.count as f64 + c.var_p / c.count as f64).sqrt();
            if dmx.abs() > tol.mean_abs + 4.0 * se_x || dmp.abs() > tol.mean_abs + 4.0 * se_p {
                means_ok = false;
            }
            let dv = q.var_p - c.var_p;
            let se = (se_var(q.var_p, q.count).powi(2) + se_var(c.var_p, c.count).powi(2)).sqrt();
            BridgeRow { t: q.t, d_mean_x: dmx, d_mean_p: dmp, d_var_p: dv, z_var_p: if se > 0.0 { dv / se } else { 0.0 } }
        })
        .collect();
    let times: Vec<f64> = quantum.iter().map(|q| q.t).collect();
    let dq = fit_diffusion(&times, &quantum.iter().map(|q| q.var_p).collect::<Vec<_>>(), gamma);
    let dc = fit_diffusion(&times, &classical.iter().map(|c| c.var_p).collect::<Vec<_>>(), gamma);
    let expected = 4.0 * gamma * mass * kt;
    let scale = dc.abs().max(expected.abs());
    let slope_rel_diff = if scale > 0.0 { (dq - dc).abs() / scale } else { 0.0 };
    let slope_ok = slope_rel_diff <= tol.slope_rel;
    Ok(BridgeReport {
        rows,
        slope_quantum: dq,
        slope_classical: dc,
        slope_expected: expected,
        slope_rel_diff,
        means_ok,
        slope_ok,
        pass: means_ok && slope_ok,
    })
}
