//! Dense finite-dimensional Hilbert-space algebra.
//!
//! Everything is stored densely as `nalgebra` complex matrices. Composite
//! spaces use Kronecker ordering with the first factor as the slow index.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Schmidt coefficients closer than this are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;
const SCHMIDT_DROP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: CVector,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Self {
        Self { amps: CVector::from_vec(amps) }
    }

    pub fn from_vector(amps: CVector) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self::new(amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self { amps: CVector::zeros(dim) }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Self { amps: v }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut CVector {
        &mut self.amps
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn into_inner(self) -> CVector {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescale to unit norm. Zero vectors are left untouched and reported.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NumericalContract(format!("cannot normalize state with norm {n}")));
        }
        self.amps.unscale_mut(n);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn scaled(&self, s: C64) -> StateVector {
        StateVector { amps: &self.amps * s }
    }

    /// |self⟩⟨self|
    pub fn projector(&self) -> CMatrix {
        &self.amps * self.amps.adjoint()
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        expectation(self, op)
    }

    /// Multiply by a global phase so the first component above `tol` in
    /// magnitude is real and positive. Returns the applied phase factor.
    pub fn fix_phase_first(&mut self, tol: f64) -> C64 {
        let scale = self.amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return ONE;
        }
        let idx = self.amps.iter().position(|a| a.norm() > tol * scale).unwrap_or(0);
        let a = self.amps[idx];
        let ph = a.conj() / a.norm();
        self.amps *= ph;
        ph
    }

    /// Multiply by a global phase so the largest-magnitude component is real
    /// and positive (first one on ties).
    pub fn fix_phase_largest(&mut self) -> C64 {
        let mut best = 0;
        let mut best_abs = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            let m = a.norm();
            if m > best_abs * (1.0 + 1e-12) {
                best = i;
                best_abs = m;
            }
        }
        if best_abs == 0.0 {
            return ONE;
        }
        let a = self.amps[best];
        let ph = a.conj() / best_abs;
        self.amps *= ph;
        ph
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: CMatrix,
}

impl Operator {
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
        }
        Ok(Self { mat })
    }

    pub(crate) fn from_matrix(mat: CMatrix) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        Self { mat }
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: CMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim, dim) }
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        Self { mat: CMatrix::from_diagonal(&CVector::from_column_slice(diag)) }
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        Self::diagonal(&diag.iter().map(|&d| C64::new(d, 0.0)).collect::<Vec<_>>())
    }

    /// |a⟩⟨b|
    pub fn outer(a: &StateVector, b: &StateVector) -> Self {
        Self { mat: a.amps() * b.amps().adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn mat_mut(&mut self) -> &mut CMatrix {
        &mut self.mat
    }

    pub fn into_inner(self) -> CMatrix {
        self.mat
    }

    pub fn adjoint(&self) -> Operator {
        Operator { mat: self.mat.adjoint() }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.mat)
    }

    /// max|O − O†|
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                d = d.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_defect() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn require_hermitian(&self) -> Result<()> {
        let dev = self.hermiticity_defect();
        if dev > 1e-12 * self.max_abs() {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(())
    }

    /// max|U†U − 1|
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.mat.adjoint() * &self.mat;
        max_abs(&(prod - CMatrix::identity(self.dim(), self.dim())))
    }

    pub fn require_unitary(&self, tol: f64) -> Result<()> {
        let dev = self.unitarity_defect();
        if dev > tol {
            return Err(Error::NotUnitary { deviation: dev });
        }
        Ok(())
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        StateVector::from_vector(&self.mat * psi.amps())
    }

    pub fn compose(&self, other: &Operator) -> Operator {
        Operator { mat: &self.mat * &other.mat }
    }

    pub fn add(&self, other: &Operator) -> Operator {
        Operator { mat: &self.mat + &other.mat }
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        Operator { mat: &self.mat - &other.mat }
    }

    pub fn scale(&self, s: C64) -> Operator {
        Operator { mat: &self.mat * s }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator { mat: &self.mat * &other.mat - &other.mat * &self.mat }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Two-level operators in the ordering |e⟩ = index 0, |g⟩ = index 1, so that
/// σ_z|e⟩ = +|e⟩.
pub mod qubit {
    use super::*;

    pub const EXCITED: usize = 0;
    pub const GROUND: usize = 1;

    pub fn sigma_x() -> Operator {
        Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    pub fn sigma_y() -> Operator {
        Operator::from_rows(&[&[ZERO, -I], &[I, ZERO]]).unwrap()
    }

    pub fn sigma_z() -> Operator {
        Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()
    }

    /// |g⟩⟨e|
    pub fn sigma_minus() -> Operator {
        Operator::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]).unwrap()
    }

    pub fn excited() -> StateVector {
        StateVector::basis(2, EXCITED)
    }

    pub fn ground() -> StateVector {
        StateVector::basis(2, GROUND)
    }

    /// (|0⟩ + |1⟩)/√2
    pub fn plus() -> StateVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_real(&[s, s])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian, unit trace, numerically positive.
    pub fn new(mat: CMatrix) -> Result<Self> {
        let op = Operator::new(mat)?;
        let herm = op.hermiticity_defect();
        if herm > 1e-12 * op.max_abs().max(1.0) {
            return Err(Error::InvalidDensity(format!("not Hermitian ({herm:.3e})")));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::InvalidDensity(format!("trace {tr}")));
        }
        let evals = hermitian_eigenvalues(op.mat());
        if let Some(&min) = evals.first() {
            if min < -1e-10 {
                return Err(Error::InvalidDensity(format!("eigenvalue {min:.3e}")));
            }
        }
        Ok(Self { mat: op.into_inner() })
    }

    /// Wrap without validation; for results of trace-preserving maps.
    pub fn from_matrix_unchecked(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn pure(psi: &StateVector) -> Self {
        let n = psi.norm_sqr();
        Self { mat: psi.projector() / C64::new(n, 0.0) }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_inner(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.mat.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        trace_of_product(&self.mat, op.mat())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }
}

pub trait TensorProduct: Sized {
    fn tensor(&self, other: &Self) -> Self;
}

impl TensorProduct for StateVector {
    fn tensor(&self, other: &Self) -> Self {
        StateVector::from_vector(self.amps.kronecker(&other.amps))
    }
}

impl TensorProduct for Operator {
    fn tensor(&self, other: &Self) -> Self {
        Operator { mat: self.mat.kronecker(&other.mat) }
    }
}

impl TensorProduct for DensityMatrix {
    fn tensor(&self, other: &Self) -> Self {
        DensityMatrix { mat: self.mat.kronecker(&other.mat) }
    }
}

/// Kronecker product, first argument is the slow index.
pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> T {
    a.tensor(b)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompositeSpace {
    factor_dims: Vec<usize>,
}

impl CompositeSpace {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() || factor_dims.contains(&0) {
            return Err(Error::param("factor_dims", "factors must be positive and nonempty"));
        }
        Ok(Self { factor_dims })
    }

    pub fn bipartite(a: usize, b: usize) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn n_factors(&self) -> usize {
        self.factor_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.factor_dims.len() {
            return Err(Error::DimensionMismatch { expected: self.factor_dims.len(), found: multi.len() });
        }
        let mut idx = 0;
        for (&m, &d) in multi.iter().zip(&self.factor_dims) {
            if m >= d {
                return Err(Error::IndexOutOfRange { index: m, len: d });
            }
            idx = idx * d + m;
        }
        Ok(idx)
    }

    pub fn multi_index(&self, mut flat: usize) -> Result<Vec<usize>> {
        let total = self.total_dim();
        if flat >= total {
            return Err(Error::IndexOutOfRange { index: flat, len: total });
        }
        let mut out = vec![0; self.factor_dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.factor_dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        Ok(out)
    }

    fn two_factors(&self) -> Result<(usize, usize)> {
        match self.factor_dims.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(Error::param("space", format!("expected two factors, got {}", self.factor_dims.len()))),
        }
    }
}

/// Reduce a matrix on the composite space to factor `keep`.
pub fn partial_trace_matrix(mat: &CMatrix, space: &CompositeSpace, keep: usize) -> Result<CMatrix> {
    let dims = space.factor_dims();
    if keep >= dims.len() {
        return Err(Error::IndexOutOfRange { index: keep, len: dims.len() });
    }
    if mat.nrows() != space.total_dim() || mat.ncols() != space.total_dim() {
        return Err(Error::DimensionMismatch { expected: space.total_dim(), found: mat.nrows() });
    }
    let left: usize = dims[..keep].iter().product();
    let d = dims[keep];
    let right: usize = dims[keep + 1..].iter().product();
    let mut out = CMatrix::zeros(d, d);
    for k in 0..d {
        for kp in 0..d {
            let mut acc = ZERO;
            for l in 0..left {
                for r in 0..right {
                    let i = (l * d + k) * right + r;
                    let j = (l * d + kp) * right + r;
                    acc += mat[(i, j)];
                }
            }
            out[(k, kp)] = acc;
        }
    }
    Ok(out)
}

pub fn partial_trace(rho: &DensityMatrix, space: &CompositeSpace, keep: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_matrix_unchecked(partial_trace_matrix(rho.mat(), space, keep)?))
}

#[derive(Clone, Debug)]
pub struct SchmidtTerm {
    pub coefficient: f64,
    pub left: StateVector,
    pub right: StateVector,
}

#[derive(Clone, Debug)]
pub struct SchmidtDecomposition {
    pub terms: Vec<SchmidtTerm>,
    /// False when two retained coefficients are closer than [`DEGENERACY_GAP`].
    pub generic: bool,
}

impl SchmidtDecomposition {
    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    pub fn reconstruct(&self) -> StateVector {
        let mut acc: Option<CVector> = None;
        for t in &self.terms {
            let v = t.left.amps().kronecker(t.right.amps()) * C64::new(t.coefficient, 0.0);
            acc = Some(match acc {
                Some(a) => a + v,
                None => v,
            });
        }
        StateVector::from_vector(acc.unwrap_or_else(|| CVector::zeros(0)))
    }
}

/// Schmidt decomposition with negligible coefficients dropped.
pub fn schmidt_decompose(psi: &StateVector, space: &CompositeSpace) -> Result<SchmidtDecomposition> {
    let mut full = schmidt_decompose_full(psi, space)?;
    let top = full.terms.first().map(|t| t.coefficient).unwrap_or(0.0);
    full.terms.retain(|t| t.coefficient > SCHMIDT_DROP * top.max(1.0));
    Ok(full)
}

/// Schmidt decomposition keeping all min(d_A, d_B) components, zeros included.
pub fn schmidt_decompose_full(psi: &StateVector, space: &CompositeSpace) -> Result<SchmidtDecomposition> {
    let (da, db) = space.two_factors()?;
    if psi.dim() != da * db {
        return Err(Error::DimensionMismatch { expected: da * db, found: psi.dim() });
    }
    let m = CMatrix::from_fn(da, db, |i, j| psi.amps()[i * db + j]);
    let svd = SVD::new(m, true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let k = da.min(db);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut terms = Vec::with_capacity(k);
    for &c in &order {
        let mut left = StateVector::from_vector(u.column(c).into_owned());
        let mut right = StateVector::from_vector(vt.row(c).transpose());
        let ph = left.fix_phase_first(1e-10);
        *right.amps_mut() *= ph.conj();
        terms.push(SchmidtTerm { coefficient: svd.singular_values[c], left, right });
    }
    let mut generic = true;
    let mut start = 0;
    while start < terms.len() {
        let mut end = start + 1;
        while end < terms.len() && terms[end - 1].coefficient - terms[end].coefficient < DEGENERACY_GAP {
            end += 1;
        }
        if end - start > 1 {
            if terms[start].coefficient > SCHMIDT_DROP {
                generic = false;
            }
            canonicalize_schmidt_block(&mut terms[start..end]);
        }
        start = end;
    }
    Ok(SchmidtDecomposition { terms, generic })
}

/// Within a degenerate block the left basis is only fixed up to a unitary.
/// Choose the echelon basis obtained by projecting e_0, e_1, … onto the block
/// span and orthonormalizing; right vectors follow so the state is unchanged.
fn canonicalize_schmidt_block(block: &mut [SchmidtTerm]) {
    let lefts: Vec<CVector> = block.iter().map(|t| t.left.amps().clone()).collect();
    let rights: Vec<CVector> = block.iter().map(|t| t.right.amps().clone()).collect();
    let w = echelon_rotation(&lefts);
    for (k, term) in block.iter_mut().enumerate() {
        let mut l = CVector::zeros(lefts[0].len());
        let mut r = CVector::zeros(rights[0].len());
        for j in 0..lefts.len() {
            l += &lefts[j] * w[(j, k)];
            r += &rights[j] * w[(j, k)].conj();
        }
        term.left = StateVector::from_vector(l);
        term.right = StateVector::from_vector(r);
    }
}

/// Unitary W (k×k) such that the columns Σ_j v_j W_jk form the echelon basis
/// of span{v_j}, given orthonormal v_j.
#[allow(clippy::needless_range_loop)]
pub(crate) fn echelon_rotation(basis: &[CVector]) -> CMatrix {
    let k = basis.len();
    let n = basis[0].len();
    let mut coeffs: Vec<CVector> = Vec::with_capacity(k);
    for e in 0..n {
        if coeffs.len() == k {
            break;
        }
        // coefficients of P e_e in the v basis: c_j = ⟨v_j|e⟩ = conj(v_j[e])
        let mut c = CVector::from_fn(k, |j, _| basis[j][e].conj());
        for prev in &coeffs {
            let ov = prev.dotc(&c);
            c -= prev * ov;
        }
        let nrm = c.norm();
        if nrm > 1e-6 {
            coeffs.push(c / C64::new(nrm, 0.0));
        }
    }
    CMatrix::from_fn(k, k, |j, col| coeffs[col][j])
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: StateVector,
}

/// Eigenpairs of a Hermitian operator, eigenvalues ascending.
pub fn eig_hermitian(op: &Operator) -> Result<Vec<Eigenpair>> {
    op.require_hermitian()?;
    let (vals, vecs) = hermitian_eigen(op.mat());
    Ok(vals.into_iter().zip(vecs).map(|(value, vector)| Eigenpair { value, vector }).collect())
}

fn symmetrized(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Unchecked Hermitian eigen-decomposition (symmetrizes first). Ascending.
pub(crate) fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, Vec<StateVector>) {
    let eig = SymmetricEigen::new(symmetrized(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let mut v = StateVector::from_vector(eig.eigenvectors.column(i).into_owned());
            v.fix_phase_first(1e-10);
            v
        })
        .collect();
    (vals, vecs)
}

pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = symmetrized(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// ⟨ψ|O|ψ⟩
/// exp(−iHt/ħ) for Hermitian H.
pub fn propagator(h: &Operator, t: f64, hbar: f64) -> Result<Operator> {
    h.require_hermitian()?;
    let (vals, vecs) = hermitian_eigen(h.mat());
    let n = h.dim();
    let v = CMatrix::from_fn(n, n, |i, k| vecs[k].amps()[i]);
    let d = CMatrix::from_diagonal(&CVector::from_iterator(n, vals.iter().map(|&l| C64::from_polar(1.0, -l * t / hbar))));
    Ok(Operator::from_matrix(matmul(&matmul(&v, &d), &v.adjoint())))
}

pub fn expectation(psi: &StateVector, op: &Operator) -> C64 {
    psi.amps().dotc(&(op.mat() * psi.amps()))
}

/// ½ Σ|eig(ρ1 − ρ2)|
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    trace_distance_matrix(a.mat(), b.mat())
}

pub fn trace_distance_matrix(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    let diff = a - b;
    Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|e| e.abs()).sum::<f64>())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|a| a.norm()).fold(0.0, f64::max)
}

/// Complex matrix product. Above a small size the product is formed from
/// four real products, which go through the blocked f64 kernel.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    if a.nrows() * b.ncols() < 24 * 24 {
        return a * b;
    }
    let ar = a.map(|z| z.re);
    let ai = a.map(|z| z.im);
    let br = b.map(|z| z.re);
    let bi = b.map(|z| z.im);
    let rr = &ar * &br - &ai * &bi;
    let ii = &ar * &bi + &ai * &br;
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| C64::new(rr[(i, j)], ii[(i, j)]))
}

/// Tr(AB) without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Random states, operators and channels for property tests and demos.
pub mod random {
    use super::*;

    fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| gaussian_c64(rng))
    }

    /// Haar-random normalized state.
    pub fn state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
        let v = CVector::from_fn(dim, |_, _| gaussian_c64(rng));
        StateVector::from_vector(v).normalized().expect("nonzero gaussian vector")
    }

    /// GUE-like Hermitian operator with entries of order `scale`.
    pub fn hermitian<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Operator {
        let g = ginibre(dim, dim, rng);
        Operator::from_matrix((&g + g.adjoint()) * C64::new(0.5 * scale, 0.0))
    }

    pub fn operator<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Operator {
        Operator::from_matrix(ginibre(dim, dim, rng) * C64::new(scale, 0.0))
    }

    /// Haar-random unitary via QR of a Ginibre matrix with the R-diagonal
    /// phases divided out.
    pub fn unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
        let qr = ginibre(dim, dim, rng).qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..dim {
            let d = r[(j, j)];
            let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
            for i in 0..dim {
                q[(i, j)] *= ph;
            }
        }
        Operator::from_matrix(q)
    }

    /// Random mixed state of the given rank.
    pub fn density<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityMatrix {
        let g = ginibre(dim, rank.max(1), rng);
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::from_matrix_unchecked(m / tr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_basis_ordering() {
        let v = tensor_product(&StateVector::basis(2, 0), &StateVector::basis(2, 1));
        assert_eq!(v, StateVector::basis(4, 1));
        let id = tensor_product(&Operator::identity(2), &Operator::identity(3));
        assert_eq!(id, Operator::identity(6));
    }

    #[test]
    fn sigma_x_sigma_z_on_00() {
        let op = tensor_product(&qubit::sigma_x(), &qubit::sigma_z());
        let out = op.apply(&StateVector::basis(4, 0));
        assert_eq!(out, StateVector::basis(4, 2));
    }

    #[test]
    fn composite_index_roundtrip() {
        let s = CompositeSpace::new(vec![2, 3, 4]).unwrap();
        for f in 0..s.total_dim() {
            let m = s.multi_index(f).unwrap();
            assert_eq!(s.flat_index(&m).unwrap(), f);
        }
        assert!(s.flat_index(&[0, 3, 0]).is_err());
    }

    #[test]
    fn bell_reduces_to_half_identity() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::from_real(&[s, 0.0, 0.0, s]);
        let space = CompositeSpace::bipartite(2, 2).unwrap();
        for keep in 0..2 {
            let r = partial_trace(&DensityMatrix::pure(&bell), &space, keep).unwrap();
            assert!((r.mat()[(0, 0)].re - 0.5).abs() < 1e-15);
            assert!((r.mat()[(1, 1)].re - 0.5).abs() < 1e-15);
            assert!(r.mat()[(0, 1)].norm() < 1e-15);
        }
        assert!(partial_trace(&DensityMatrix::pure(&bell), &space, 2).is_err());
    }

    #[test]
    fn schmidt_of_bell_and_product() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let space = CompositeSpace::bipartite(2, 2).unwrap();
        let bell = StateVector::from_real(&[s, 0.0, 0.0, s]);
        let d = schmidt_decompose(&bell, &space).unwrap();
        assert_eq!(d.terms.len(), 2);
        assert!(!d.generic);
        for t in &d.terms {
            assert!((t.coefficient - s).abs() < 1e-12);
        }
        let prod = StateVector::basis(4, 3);
        let d = schmidt_decompose(&prod, &space).unwrap();
        assert_eq!(d.terms.len(), 1);
        assert!((d.terms[0].coefficient - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_closed_forms() {
        let a = DensityMatrix::new(Operator::real_diagonal(&[0.3, 0.7]).into_inner()).unwrap();
        let b = DensityMatrix::maximally_mixed(2);
        assert!((trace_distance(&a, &b).unwrap() - 0.2).abs() < 1e-14);
        let e = DensityMatrix::pure(&StateVector::basis(2, 0));
        let g = DensityMatrix::pure(&StateVector::basis(2, 1));
        assert!((trace_distance(&e, &g).unwrap() - 1.0).abs() < 1e-14);
        assert!(trace_distance(&a, &a).unwrap() < 1e-15);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let op = Operator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(eig_hermitian(&op), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random::unitary(6, &mut rng);
        assert!(u.unitarity_defect() < 1e-13);
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(Operator::real_diagonal(&[0.5, 0.6]).into_inner()).is_err());
        assert!(DensityMatrix::new(Operator::real_diagonal(&[1.1, -0.1]).into_inner()).is_err());
        assert!(DensityMatrix::new(Operator::real_diagonal(&[0.4, 0.6]).into_inner()).is_ok());
    }
}
