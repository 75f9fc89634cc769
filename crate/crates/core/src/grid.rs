//! Uniform periodic position grid for a 1-D particle.
//!
//! Points x_j = −L/2 + j·dx on [−L/2, L/2). Momenta live on the reciprocal
//! lattice p_k = 2πħk/L in FFT order, so x is diagonal here and p is diagonal
//! after a forward transform.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector, Operator, StateVector, C64, ZERO};

#[derive(Clone)]
pub struct Grid1d {
    n: usize,
    length: f64,
    hbar: f64,
    x: Vec<f64>,
    p: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid1d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid1d").field("n", &self.n).field("length", &self.length).field("hbar", &self.hbar).finish()
    }
}

impl Grid1d {
    pub fn new(n: usize, length: f64, hbar: f64) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::param("grid.n", "must be even and at least 2"));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::param("grid.length", "must be positive"));
        }
        if !(hbar > 0.0) {
            return Err(Error::param("hbar", "must be positive"));
        }
        let dx = length / n as f64;
        let x = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let p = (0..n)
            .map(|k| {
                let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                2.0 * PI * hbar * kk / length
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self { n, length, hbar, x, p, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI * self.hbar / self.length
    }

    /// Largest representable |p| (the Nyquist momentum πħ/dx).
    pub fn p_max(&self) -> f64 {
        PI * self.hbar / self.dx()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Momentum lattice in FFT order.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Unitary (orthonormal) forward transform, in place.
    pub fn to_momentum(&self, v: &mut [C64]) {
        self.forward.process(v);
        let s = 1.0 / (self.n as f64).sqrt();
        v.iter_mut().for_each(|a| *a *= s);
    }

    pub fn to_position(&self, v: &mut [C64]) {
        self.inverse.process(v);
        let s = 1.0 / (self.n as f64).sqrt();
        v.iter_mut().for_each(|a| *a *= s);
    }

    /// f(p)ψ for a momentum-diagonal multiplier.
    pub fn apply_momentum_fn(&self, psi: &CVector, f: impl Fn(f64) -> C64) -> CVector {
        let mut v = psi.clone();
        self.apply_momentum_fn_mut(v.as_mut_slice(), f);
        v
    }

    pub fn apply_momentum_fn_mut(&self, v: &mut [C64], f: impl Fn(f64) -> C64) {
        self.forward.process(v);
        let s = 1.0 / self.n as f64;
        for (a, &p) in v.iter_mut().zip(&self.p) {
            *a *= f(p) * s;
        }
        self.inverse.process(v);
    }

    pub fn apply_p(&self, psi: &CVector) -> CVector {
        self.apply_momentum_fn(psi, |p| C64::new(p, 0.0))
    }

    pub fn apply_x(&self, psi: &CVector) -> CVector {
        CVector::from_fn(self.n, |j, _| psi[j] * self.x[j])
    }

    /// Probability mass per momentum lattice point, FFT order.
    pub fn momentum_probabilities(&self, psi: &CVector) -> Vec<f64> {
        let mut v = psi.clone();
        self.to_momentum(v.as_mut_slice());
        v.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn x_operator(&self) -> Operator {
        Operator::real_diagonal(&self.x)
    }

    /// Dense F⁻¹ diag(f(p_k)) F.
    pub fn momentum_operator_fn(&self, f: impl Fn(f64) -> f64) -> Operator {
        let n = self.n;
        let vals: Vec<f64> = self.p.iter().map(|&p| f(p)).collect();
        // Entry (j,l) depends only on (j−l) mod n.
        let mut kernel = vec![ZERO; n];
        for (d, slot) in kernel.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (k, &v) in vals.iter().enumerate() {
                let ang = 2.0 * PI * (k * d % n) as f64 / n as f64;
                acc += C64::from_polar(v, ang);
            }
            *slot = acc / n as f64;
        }
        let mat = CMatrix::from_fn(n, n, |j, l| kernel[(j + n - l) % n]);
        Operator::new(mat).expect("square")
    }

    pub fn p_operator(&self) -> Operator {
        self.momentum_operator_fn(|p| p)
    }

    /// Normalize a sampled wavefunction so Σ|ψ_j|² = 1.
    pub fn state_from_fn(&self, f: impl Fn(f64) -> C64) -> Result<StateVector> {
        StateVector::new(self.x.iter().map(|&x| f(x)).collect()).normalized()
    }

    pub fn mean_x(&self, psi: &CVector) -> f64 {
        psi.iter().zip(&self.x).map(|(a, &x)| a.norm_sqr() * x).sum()
    }

    /// (⟨x⟩, ⟨p⟩, var_x, var_p) of a normalized state.
    pub fn moments(&self, psi: &CVector) -> (f64, f64, f64, f64) {
        let mut mx = 0.0;
        let mut mx2 = 0.0;
        for (a, &x) in psi.iter().zip(&self.x) {
            let w = a.norm_sqr();
            mx += w * x;
            mx2 += w * x * x;
        }
        let probs = self.momentum_probabilities(psi);
        let mut mp = 0.0;
        let mut mp2 = 0.0;
        for (w, &p) in probs.iter().zip(&self.p) {
            mp += w * p;
            mp2 += w * p * p;
        }
        (mx, mp, mx2 - mx * mx, mp2 - mp * mp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_p_matches_fft() {
        let g = Grid1d::new(16, 8.0, 1.0).unwrap();
        let psi = g.state_from_fn(|x| C64::new((-(x - 0.3) * (x - 0.3)).exp(), 0.2 * x)).unwrap();
        let a = g.p_operator().apply(&psi);
        let b = g.apply_p(psi.amps());
        for j in 0..16 {
            assert!((a.amps()[j] - b[j]).norm() < 1e-12);
        }
        assert!(g.p_operator().is_hermitian(1e-12));
    }

    #[test]
    fn plane_wave_momentum() {
        let g = Grid1d::new(32, 10.0, 1.0).unwrap();
        let k = 3.0 * g.dp();
        let psi = g.state_from_fn(|x| C64::from_polar(1.0, k * x)).unwrap();
        let (_, mp, _, vp) = g.moments(psi.amps());
        assert!((mp - k).abs() < 1e-12);
        assert!(vp.abs() < 1e-10);
    }
}
