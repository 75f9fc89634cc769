//! Concrete systems: 1-D potentials, the quantum and classical kicked rotor,
//! Lyapunov estimation, and the time/length scale formulas.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector, Operator, StateVector, C64};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    #[default]
    Free,
    /// V = ½·stiffness·x²
    Harmonic { stiffness: f64 },
    /// V = depth·((x/x_min)² − 1)²
    DoubleWell { depth: f64, x_min: f64 },
    /// V = amplitude·cos(wavenumber·x)
    Cosine { amplitude: f64, wavenumber: f64 },
}

impl Potential {
    pub fn harmonic(mass: f64, omega: f64) -> Self {
        Potential::Harmonic { stiffness: mass * omega * omega }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Potential::Free => "free",
            Potential::Harmonic { .. } => "harmonic",
            Potential::DoubleWell { .. } => "double_well",
            Potential::Cosine { .. } => "cosine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        match *self {
            Potential::Free => Ok(()),
            Potential::Harmonic { stiffness } if ok(stiffness) => Ok(()),
            Potential::DoubleWell { depth, x_min } if ok(depth) && x_min > 0.0 && ok(x_min) => Ok(()),
            Potential::Cosine { amplitude, wavenumber } if ok(amplitude) && ok(wavenumber) => Ok(()),
            _ => Err(Error::param("potential", "parameters must be finite (x_min > 0)")),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { stiffness } => 0.5 * stiffness * x * x,
            Potential::DoubleWell { depth, x_min } => {
                let u = x / x_min;
                depth * (u * u - 1.0).powi(2)
            }
            Potential::Cosine { amplitude, wavenumber } => amplitude * (wavenumber * x).cos(),
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { stiffness } => stiffness * x,
            Potential::DoubleWell { depth, x_min } => {
                let u = x / x_min;
                4.0 * depth * u * (u * u - 1.0) / x_min
            }
            Potential::Cosine { amplitude, wavenumber } => -amplitude * wavenumber * (wavenumber * x).sin(),
        }
    }

    /// Force linear in x, so the moment hierarchy closes.
    pub fn has_closed_moments(&self) -> bool {
        matches!(self, Potential::Free | Potential::Harmonic { .. })
    }

    pub fn stiffness(&self) -> Option<f64> {
        match *self {
            Potential::Free => Some(0.0),
            Potential::Harmonic { stiffness } => Some(stiffness),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickedRotorParams {
    /// K in V = K cos θ Σ δ(t − nτ)
    pub kick_strength: f64,
    pub inertia: f64,
    pub period: f64,
    pub hbar: f64,
    /// Odd; angular momenta m ∈ [−(dim−1)/2, (dim−1)/2].
    pub dim: usize,
}

impl Default for KickedRotorParams {
    fn default() -> Self {
        Self { kick_strength: 10.0, inertia: 1.0, period: 1.0, hbar: 1.0, dim: 201 }
    }
}

impl KickedRotorParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim.is_multiple_of(2) || self.dim < 65 {
            return Err(Error::param("dim", "must be odd and at least 65"));
        }
        for (name, v) in [("inertia", self.inertia), ("period", self.period), ("hbar", self.hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if !self.kick_strength.is_finite() {
            return Err(Error::param("kick_strength", "must be finite"));
        }
        Ok(())
    }

    /// Chirikov stochasticity parameter K·τ/I.
    pub fn k_eff(&self) -> f64 {
        self.kick_strength * self.period / self.inertia
    }

    pub fn m_max(&self) -> i64 {
        (self.dim as i64 - 1) / 2
    }

    /// Largest represented action ħ·m_max, the J/ħ scale times ħ.
    pub fn action_scale(&self) -> f64 {
        self.hbar * self.m_max() as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.dim).map(|j| 2.0 * PI * j as f64 / self.dim as f64).collect()
    }

    /// Classical kick-then-rotate map on (θ, L), θ reduced to [0, 2π).
    pub fn classical_step(&self, theta: f64, l: f64) -> (f64, f64) {
        let l1 = l + self.kick_strength * theta.sin();
        let th = (theta + l1 * self.period / self.inertia).rem_euclid(2.0 * PI);
        (th, l1)
    }
}

/// Quantum kicked rotor in the angular-momentum basis (index i ↔ m = i − m_max).
/// One period applies the kick exp(−iK cosθ/ħ) in the angle representation and
/// then the free rotation exp(−iħm²τ/2I).
#[derive(Clone)]
pub struct KickedRotor {
    params: KickedRotorParams,
    free_phase: Vec<C64>,
    kick_phase: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl KickedRotor {
    pub fn new(params: KickedRotorParams) -> Result<Self> {
        params.validate()?;
        let m_max = params.m_max();
        let free_phase = (0..params.dim)
            .map(|i| {
                let m = (i as i64 - m_max) as f64;
                C64::from_polar(1.0, -params.hbar * m * m * params.period / (2.0 * params.inertia))
            })
            .collect();
        let kick_phase = params.angles().iter().map(|&th| C64::from_polar(1.0, -params.kick_strength * th.cos() / params.hbar)).collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(params.dim);
        let inverse = planner.plan_fft_inverse(params.dim);
        Ok(Self { params, free_phase, kick_phase, forward, inverse })
    }

    pub fn params(&self) -> &KickedRotorParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    fn slot(&self, i: usize) -> usize {
        // m = i − m_max stored at m mod N
        let n = self.params.dim as i64;
        ((i as i64 - self.params.m_max()).rem_euclid(n)) as usize
    }

    /// Angle amplitudes a_j = Σ_m c_m e^{imθ_j}/√N.
    pub fn to_angle(&self, c: &CVector) -> CVector {
        let n = self.params.dim;
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            buf[self.slot(i)] = c[i];
        }
        self.inverse.process(&mut buf);
        let s = 1.0 / (n as f64).sqrt();
        CVector::from_iterator(n, buf.into_iter().map(|a| a * s))
    }

    pub fn from_angle(&self, a: &CVector) -> CVector {
        let n = self.params.dim;
        let mut buf: Vec<C64> = a.iter().copied().collect();
        self.forward.process(&mut buf);
        let s = 1.0 / (n as f64).sqrt();
        CVector::from_fn(n, |i, _| buf[self.slot(i)] * s)
    }

    pub fn step(&self, c: &mut CVector) {
        let mut a = self.to_angle(c);
        for (x, k) in a.iter_mut().zip(&self.kick_phase) {
            *x *= k;
        }
        let mut out = self.from_angle(&a);
        for (x, f) in out.iter_mut().zip(&self.free_phase) {
            *x *= f;
        }
        *c = out;
    }

    /// Dense one-period unitary.
    pub fn floquet(&self) -> Operator {
        let n = self.params.dim;
        let mut mat = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = StateVector::basis(n, j).into_inner();
            self.step(&mut e);
            mat.set_column(j, &e);
        }
        Operator::new(mat).expect("square")
    }

    /// Population within `width` states of either truncation edge.
    pub fn edge_population(&self, c: &CVector, width: usize) -> f64 {
        let n = c.len();
        (0..n).filter(|&i| i < width || i + width >= n).map(|i| c[i].norm_sqr()).sum()
    }
}

pub fn rotor_floquet(params: &KickedRotorParams) -> Result<Operator> {
    let u = KickedRotor::new(params.clone())?.floquet();
    u.require_unitary(1e-10)?;
    Ok(u)
}

/// Iterate the standard map p' = p + K sin θ, θ' = θ + p' (θ mod 2π).
pub fn classical_standard_map(points: &[(f64, f64)], k_eff: f64, n_steps: usize) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|&(mut th, mut p)| {
            for _ in 0..n_steps {
                p += k_eff * th.sin();
                th = (th + p).rem_euclid(2.0 * PI);
            }
            (th, p)
        })
        .collect()
}

/// Exact inverse of one standard-map period.
pub fn standard_map_inverse(points: &[(f64, f64)], k_eff: f64) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|&(th, p)| {
            let th0 = (th - p).rem_euclid(2.0 * PI);
            (th0, p - k_eff * th0.sin())
        })
        .collect()
}

/// A map (or sampled flow) with its tangent linearization.
pub trait TangentMap {
    fn dim(&self) -> usize;
    /// Advance `state` one step and push `tangent` through the Jacobian at the
    /// pre-step state.
    fn step(&self, state: &mut [f64], tangent: &mut [f64]);
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Time per step, for rates per unit time.
    fn step_time(&self) -> f64 {
        1.0
    }
}

pub struct StandardMap {
    pub k_eff: f64,
}

impl TangentMap for StandardMap {
    fn dim(&self) -> usize {
        2
    }

    fn step(&self, s: &mut [f64], t: &mut [f64]) {
        let c = self.k_eff * s[0].cos();
        // dp' = dp + c dθ ; dθ' = dθ + dp'
        let dp = t[1] + c * t[0];
        let dth = t[0] + dp;
        t[0] = dth;
        t[1] = dp;
        s[1] += self.k_eff * s[0].sin();
        s[0] = (s[0] + s[1]).rem_euclid(2.0 * PI);
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![rng.random::<f64>() * 2.0 * PI, (rng.random::<f64>() - 0.5) * 2.0 * PI]
    }
}

/// Harmonic-oscillator flow sampled at interval `dt`; its tangent map is a
/// rotation, so the exponent is zero.
pub struct HarmonicFlow {
    pub omega: f64,
    pub dt: f64,
}

impl TangentMap for HarmonicFlow {
    fn dim(&self) -> usize {
        2
    }

    fn step(&self, s: &mut [f64], t: &mut [f64]) {
        let (c, sn) = ((self.omega * self.dt).cos(), (self.omega * self.dt).sin());
        let rot = |v: &mut [f64]| {
            let (x, y) = (v[0], v[1]);
            v[0] = c * x + sn * y;
            v[1] = -sn * x + c * y;
        };
        rot(s);
        rot(t);
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]
    }

    fn step_time(&self) -> f64 {
        self.dt
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovEstimate {
    /// Per step.
    pub lambda: f64,
    pub std_error: f64,
    pub per_sample: Vec<f64>,
}

impl LyapunovEstimate {
    pub fn per_time(&self, step_time: f64) -> f64 {
        self.lambda / step_time
    }
}

const RENORM_EVERY: usize = 10;

/// Largest Lyapunov exponent from the averaged log-stretch of a tangent
/// vector, renormalized every ten steps.
pub fn lyapunov_estimate<M: TangentMap>(map: &M, n_steps: usize, n_samples: usize, seed: u64) -> Result<LyapunovEstimate> {
    if n_steps == 0 || n_samples == 0 {
        return Err(Error::param("n_steps", "need at least one step and one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_sample = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut s = map.random_point(&mut rng);
        let mut t = vec![0.0; map.dim()];
        t[0] = 1.0;
        let mut log_sum = 0.0;
        for k in 1..=n_steps {
            map.step(&mut s, &mut t);
            if k % RENORM_EVERY == 0 || k == n_steps {
                let n = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                log_sum += n.ln();
                t.iter_mut().for_each(|v| *v /= n);
            }
        }
        per_sample.push(log_sum / n_steps as f64);
    }
    let n = per_sample.len() as f64;
    let mean = per_sample.iter().sum::<f64>() / n;
    let var = if per_sample.len() > 1 { per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(LyapunovEstimate { lambda: mean, std_error: (var / n).sqrt(), per_sample })
}

/// Exponential growth rate of the mean log separation of a small ball of
/// standard-map points from its centre, fitted while the separation stays
/// below 0.1.
pub fn divergence_rate(k_eff: f64, centre: (f64, f64), radius: f64, n_points: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centre = centre;
    let mut pts: Vec<(f64, f64)> = (0..n_points)
        .map(|_| {
            let a = rng.random::<f64>() * 2.0 * PI;
            (centre.0 + radius * a.cos(), centre.1 + radius * a.sin())
        })
        .collect();
    let sep = |pts: &[(f64, f64)], c: (f64, f64)| {
        pts.iter()
            .map(|&(t, p)| {
                let mut dt = (t - c.0).rem_euclid(2.0 * PI);
                if dt > PI {
                    dt -= 2.0 * PI;
                }
                (dt * dt + (p - c.1).powi(2)).sqrt().ln()
            })
            .sum::<f64>()
            / pts.len() as f64
    };
    let mut series = vec![sep(&pts, centre)];
    loop {
        pts = classical_standard_map(&pts, k_eff, 1);
        centre = classical_standard_map(&[centre], k_eff, 1)[0];
        let s = sep(&pts, centre);
        if s > (0.1f64).ln() || series.len() > 200 {
            break;
        }
        series.push(s);
    }
    if series.len() < 3 {
        return Err(Error::param("radius", "ball saturates too quickly to fit a rate"));
    }
    // least-squares slope
    let n = series.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = series.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in series.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// T = λ⁻¹ ln(I/ħ).
pub fn ehrenfest_time(lambda: f64, action: f64, hbar: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    if !(hbar > 0.0) || !(action > 0.0) {
        return Err(Error::param("action", "action and hbar must be positive"));
    }
    let ratio = action / hbar;
    if !(ratio > 1.0) {
        return Err(Error::param("action", "I/ħ must exceed 1"));
    }
    Ok(ratio.ln() / lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalizationScales {
    /// Packet size ℓ = ħ√(λ/(γmkT)).
    pub ell: f64,
    /// Localization time at ℓ, ħ²/(γmkTℓ²).
    pub tau: f64,
    /// Jump-rate estimate γmkTℓ²/ħ².
    pub r_est: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalParams {
    pub mass: f64,
    pub kt: f64,
    pub gamma: f64,
    pub hbar: f64,
}

impl ThermalParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("mass", self.mass), ("kt", self.kt), ("gamma", self.gamma), ("hbar", self.hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        Ok(())
    }

    fn d(&self) -> f64 {
        self.gamma * self.mass * self.kt
    }
}

/// Time to localize a superposition spread over ℓ.
pub fn localization_time(p: &ThermalParams, ell: f64) -> Result<f64> {
    p.validate()?;
    if !(ell > 0.0) {
        return Err(Error::param("ell", "must be positive"));
    }
    Ok(p.hbar * p.hbar / (p.d() * ell * ell))
}

pub fn localization_scales(p: &ThermalParams, lambda: f64) -> Result<LocalizationScales> {
    p.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let ell = p.hbar * (lambda / p.d()).sqrt();
    let tau = localization_time(p, ell)?;
    let r_est = p.d() * ell * ell / (p.hbar * p.hbar);
    Ok(LocalizationScales { ell, tau, r_est })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_gradients_match_differences() {
        let pots = [
            Potential::Free,
            Potential::Harmonic { stiffness: 2.5 },
            Potential::DoubleWell { depth: 1.3, x_min: 0.7 },
            Potential::Cosine { amplitude: 0.8, wavenumber: 1.9 },
        ];
        for v in &pots {
            for &x in &[-1.7, -0.3, 0.2, 1.1] {
                let h = 1e-5;
                let fd = (v.value(x + h) - v.value(x - h)) / (2.0 * h);
                let g = v.gradient(x);
                assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "{v:?} at {x}");
            }
        }
    }

    #[test]
    fn ehrenfest_trivial_cases() {
        assert!((ehrenfest_time(1.0, std::f64::consts::E, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(ehrenfest_time(0.0, 10.0, 1.0).is_err());
        assert!(ehrenfest_time(1.0, 0.5, 1.0).is_err());
        let t1 = ehrenfest_time(0.7, 50.0, 1.0).unwrap();
        let t2 = ehrenfest_time(0.7, 50.0, 2.0).unwrap();
        assert!((t2 - (t1 - 2f64.ln() / 0.7)).abs() < 1e-12);
    }

    #[test]
    fn scales_plug_in() {
        let p = ThermalParams { mass: 1.0, kt: 1.0, gamma: 1.0, hbar: 1.0 };
        let s = localization_scales(&p, 4.0).unwrap();
        assert!((s.ell - 2.0).abs() < 1e-15);
        assert!((s.r_est - 4.0).abs() < 1e-14);
        assert!((s.tau - 0.25).abs() < 1e-15);
    }

    #[test]
    fn standard_map_roundtrip() {
        let pts = vec![(0.3, 1.2), (5.9, -4.0), (2.0, 0.0)];
        let fwd = classical_standard_map(&pts, 10.0, 1);
        let back = standard_map_inverse(&fwd, 10.0);
        for (a, b) in pts.iter().zip(&back) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }
}
