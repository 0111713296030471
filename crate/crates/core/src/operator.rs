//! Dense complex linear algebra at small dimension.
//!
//! Operators, pure states on projective space, the Fubini–Study metric and the
//! second exterior power. Everything here is immutable once built.
//!
//! Two norms appear across the crate: the operator norm ([`ComplexOperator::op_norm`])
//! is used for relative tolerances and rescaling decisions, the trace norm
//! ([`ComplexOperator::trace_norm`]) for distances between states.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Asymmetry allowed after symmetrization, relative to the operator size.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Asymmetry above which an input is rejected instead of symmetrized.
const HERMITIAN_REJECT: f64 = 1e-8;
/// Negative eigenvalues down to this magnitude are clipped to zero.
pub const CLIP_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Two projective points are equal when their overlap is within this of one.
pub const PHASE_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A square complex matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexOperator {
    m: CMatrix,
}

impl ComplexOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { m })
    }

    /// Row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::new(CMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        let v: Vec<C64> = entries.iter().map(|&x| c(x, 0.0)).collect();
        Self::from_row_slice(dim, &v)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: CMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        Self {
            m: CMatrix::from_diagonal(&CVector::from_column_slice(entries)),
        }
    }

    /// `x y*`
    pub fn outer(x: &CVector, y: &CVector) -> Self {
        Self {
            m: x * y.adjoint(),
        }
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: self.m.adjoint(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { m: &self.m * s }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = SVD::new(self.m.clone(), false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.singular_values()[0]
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self {
            m: &self.m * &other.m - &other.m * &self.m,
        }
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        &self.m * x
    }
}

impl fmt::Debug for ComplexOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexOperator{}", self.m)
    }
}

impl Add for &ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: Self) -> ComplexOperator {
        ComplexOperator {
            m: &self.m + &rhs.m,
        }
    }
}

impl Sub for &ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: Self) -> ComplexOperator {
        ComplexOperator {
            m: &self.m - &rhs.m,
        }
    }
}

impl Mul for &ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: Self) -> ComplexOperator {
        ComplexOperator {
            m: &self.m * &rhs.m,
        }
    }
}

/// JSON form of a matrix: `[re, im]` pairs, either flat row-major or nested by rows.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Flat(Vec<[f64; 2]>),
    Rows(Vec<Vec<[f64; 2]>>),
}

impl TryFrom<MatrixRepr> for ComplexOperator {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        let (dim, flat): (usize, Vec<[f64; 2]>) = match r {
            MatrixRepr::Flat(v) => {
                let dim = (v.len() as f64).sqrt().round() as usize;
                if dim * dim != v.len() {
                    return Err(Error::Config(format!(
                        "flat matrix with {} entries is not square",
                        v.len()
                    )));
                }
                (dim, v)
            }
            MatrixRepr::Rows(rows) => {
                let dim = rows.len();
                if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: bad.len(),
                    });
                }
                (dim, rows.into_iter().flatten().collect())
            }
        };
        let entries: Vec<C64> = flat.iter().map(|p| c(p[0], p[1])).collect();
        Self::from_row_slice(dim, &entries)
    }
}

impl From<ComplexOperator> for MatrixRepr {
    fn from(op: ComplexOperator) -> Self {
        let k = op.dim();
        let mut flat = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let z = op.m[(i, j)];
                flat.push([z.re, z.im]);
            }
        }
        MatrixRepr::Flat(flat)
    }
}

/// Self-adjoint operator, symmetrized on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexOperator", into = "ComplexOperator")]
pub struct HermitianOperator {
    op: ComplexOperator,
}

impl HermitianOperator {
    /// Rejects inputs that are visibly non-Hermitian; otherwise replaces `A` by `(A + A*)/2`.
    pub fn new(op: ComplexOperator) -> Result<Self> {
        let asym = (&op.m - op.m.adjoint()).norm();
        let scale = op.frobenius_norm().max(1.0);
        if asym > HERMITIAN_REJECT * scale {
            return Err(Error::NotHermitian(asym));
        }
        Ok(Self::hermitian_part(&op))
    }

    pub fn hermitian_part(op: &ComplexOperator) -> Self {
        let m = (&op.m + op.m.adjoint()) * c(0.5, 0.0);
        Self {
            op: ComplexOperator { m },
        }
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let v: Vec<C64> = d.iter().map(|&x| c(x, 0.0)).collect();
        Self {
            op: ComplexOperator::diagonal(&v),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            op: ComplexOperator::identity(dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            op: ComplexOperator::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn as_operator(&self) -> &ComplexOperator {
        &self.op
    }

    pub fn into_operator(self) -> ComplexOperator {
        self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.op.m
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    /// Eigenvalues ascending, with eigenvectors as matching columns.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        let k = self.dim();
        let eig = SymmetricEigen::new(self.op.m.clone());
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vecs = CMatrix::zeros(k, k);
        for (col, &i) in idx.iter().enumerate() {
            vecs.set_column(col, &eig.eigenvectors.column(i));
        }
        (vals, vecs)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().0
    }

    /// `Re <x, A x>`
    pub fn expectation(&self, x: &CVector) -> f64 {
        x.dotc(&(&self.op.m * x)).re
    }

    /// Rebuild from a spectral decomposition `V diag(vals) V*`.
    pub fn from_spectrum(vals: &[f64], vecs: &CMatrix) -> Self {
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            vals.len(),
            vals.iter().map(|&x| c(x, 0.0)),
        ));
        Self::hermitian_part(&ComplexOperator {
            m: vecs * d * vecs.adjoint(),
        })
    }
}

impl TryFrom<ComplexOperator> for HermitianOperator {
    type Error = Error;
    fn try_from(op: ComplexOperator) -> Result<Self> {
        Self::new(op)
    }
}

impl From<HermitianOperator> for ComplexOperator {
    fn from(h: HermitianOperator) -> Self {
        h.op
    }
}

/// Positive semidefinite, trace-one operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexOperator", into = "ComplexOperator")]
pub struct DensityMatrix {
    h: HermitianOperator,
}

impl DensityMatrix {
    /// Validates trace and spectrum. Tiny negative eigenvalues (down to `-CLIP_TOL`) are
    /// clipped and the trace renormalized; a valid PSD input keeps its entries untouched.
    pub fn new(h: HermitianOperator) -> Result<Self> {
        let tr = h.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotDensity(format!("trace {tr}")));
        }
        let (vals, vecs) = h.eigh();
        let min = vals.first().copied().unwrap_or(0.0);
        if min < -CLIP_TOL {
            return Err(Error::NotDensity(format!("eigenvalue {min:.3e}")));
        }
        if min >= 0.0 {
            return Ok(Self { h });
        }
        Ok(Self::clip_spectrum(&vals, &vecs))
    }

    pub fn from_operator(op: ComplexOperator) -> Result<Self> {
        Self::new(HermitianOperator::new(op)?)
    }

    /// PSD repair for integrator output: Hermitian part, clip negative eigenvalues,
    /// renormalize the trace.
    pub fn repair(op: &ComplexOperator) -> Result<Self> {
        let h = HermitianOperator::hermitian_part(op);
        let (vals, vecs) = h.eigh();
        let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NotDensity("no positive spectrum to repair".into()));
        }
        Ok(Self::clip_spectrum(&vals, &vecs))
    }

    fn clip_spectrum(vals: &[f64], vecs: &CMatrix) -> Self {
        let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let normalized: Vec<f64> = clipped.iter().map(|v| v / total).collect();
        Self {
            h: HermitianOperator::from_spectrum(&normalized, vecs),
        }
    }

    pub(crate) fn from_hermitian_unchecked(h: HermitianOperator) -> Self {
        Self { h }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            h: HermitianOperator {
                op: ComplexOperator::identity(dim).scale(c(1.0 / dim as f64, 0.0)),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn as_operator(&self) -> &ComplexOperator {
        self.h.as_operator()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.h.matrix()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.h.eigenvalues()
    }

    pub fn purity(&self) -> f64 {
        self.matrix().iter().map(|z| z.norm_sqr()).sum()
    }

    /// `tr(A rho)`
    pub fn expect(&self, a: &ComplexOperator) -> C64 {
        (a.matrix() * self.matrix()).trace()
    }

    /// `1/2 ||rho - sigma||_1`
    pub fn trace_distance(&self, other: &Self) -> f64 {
        0.5 * (self.as_operator() - other.as_operator()).trace_norm()
    }

    /// Numerical rank with eigenvalue cutoff `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&v| v > tol).count()
    }
}

impl TryFrom<ComplexOperator> for DensityMatrix {
    type Error = Error;
    fn try_from(op: ComplexOperator) -> Result<Self> {
        Self::from_operator(op)
    }
}

impl From<DensityMatrix> for ComplexOperator {
    fn from(d: DensityMatrix) -> Self {
        d.h.op
    }
}

/// A pure state: a unit vector up to global phase.
///
/// The stored representative has its first non-negligible component real and positive.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct ProjectivePoint {
    v: CVector,
}

impl ProjectivePoint {
    pub fn new(v: CVector) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        let mut v = v / c(n, 0.0);
        if let Some(lead) = v.iter().find(|z| z.norm() > 1e-12).copied() {
            let phase = lead.conj() / lead.norm();
            v *= phase;
        }
        Ok(Self { v })
    }

    pub fn from_slice(entries: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(entries))
    }

    pub fn from_real(entries: &[f64]) -> Result<Self> {
        Self::new(CVector::from_iterator(
            entries.len(),
            entries.iter().map(|&x| c(x, 0.0)),
        ))
    }

    /// The class of the `i`-th standard basis vector.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[i] = c(1.0, 0.0);
        Self { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn vector(&self) -> &CVector {
        &self.v
    }

    /// `|<x, y>|`
    pub fn overlap(&self, other: &Self) -> f64 {
        self.v.dotc(&other.v).norm()
    }

    /// `A . x` (the class of `A x`).
    pub fn transform(&self, a: &ComplexOperator) -> Result<Self> {
        Self::new(a.apply(&self.v))
    }
}

impl PartialEq for ProjectivePoint {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && (self.overlap(other) - 1.0).abs() <= PHASE_TOL
    }
}

impl fmt::Debug for ProjectivePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.v.iter()).finish()
    }
}

impl TryFrom<Vec<[f64; 2]>> for ProjectivePoint {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(CVector::from_iterator(
            v.len(),
            v.iter().map(|p| c(p[0], p[1])),
        ))
    }
}

impl From<ProjectivePoint> for Vec<[f64; 2]> {
    fn from(p: ProjectivePoint) -> Self {
        p.v.iter().map(|z| [z.re, z.im]).collect()
    }
}

/// Rank-one projector onto the line of `x`.
pub fn make_projector(x: &ProjectivePoint) -> DensityMatrix {
    let op = ComplexOperator::outer(&x.v, &x.v);
    DensityMatrix::from_hermitian_unchecked(HermitianOperator { op })
}

/// `||x ^ y||` for unit vectors, via the Lagrange identity.
fn wedge_length(x: &CVector, y: &CVector) -> f64 {
    let k = x.len();
    let mut acc = 0.0;
    for p in 0..k {
        for q in (p + 1)..k {
            acc += (x[p] * y[q] - x[q] * y[p]).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Fubini–Study distance `sqrt(1 - |<x,y>|^2)`.
///
/// Evaluated as `||x ^ y||`, which stays accurate for nearby points where the
/// direct formula cancels.
pub fn fs_distance(x: &ProjectivePoint, y: &ProjectivePoint) -> f64 {
    assert_eq!(x.dim(), y.dim(), "fs_distance dimension mismatch");
    wedge_length(&x.v, &y.v).min(1.0)
}

/// Same metric on raw vectors of arbitrary nonzero norm.
pub fn fs_distance_vectors(x: &CVector, y: &CVector) -> f64 {
    let nx = x.norm();
    let ny = y.norm();
    (wedge_length(x, y) / (nx * ny)).min(1.0)
}

/// Index pairs `(p, q)`, `p < q`, in lexicographic order: the basis `e_p ^ e_q`.
pub fn wedge_basis(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for p in 0..k {
        for q in (p + 1)..k {
            out.push((p, q));
        }
    }
    out
}

/// `∧²A` acting on alternating 2-forms.
#[derive(Clone, Debug, PartialEq)]
pub struct WedgeOperator {
    base_dim: usize,
    m: CMatrix,
}

impl WedgeOperator {
    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn op_norm(&self) -> f64 {
        ComplexOperator::from_matrix_unchecked(self.m.clone()).op_norm()
    }

    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.base_dim, other.base_dim);
        Self {
            base_dim: self.base_dim,
            m: &self.m * &other.m,
        }
    }
}

/// Matrix of `∧²A` in the lexicographic basis: entries are the 2x2 minors of `A`.
pub fn wedge_square(a: &ComplexOperator) -> Result<WedgeOperator> {
    let k = a.dim();
    if k < 2 {
        return Err(Error::Degenerate("second exterior power needs dimension >= 2"));
    }
    let basis = wedge_basis(k);
    let n = basis.len();
    let m = a.matrix();
    let mut w = CMatrix::zeros(n, n);
    for (row, &(p, q)) in basis.iter().enumerate() {
        for (col, &(r, s)) in basis.iter().enumerate() {
            w[(row, col)] = m[(p, r)] * m[(q, s)] - m[(p, s)] * m[(q, r)];
        }
    }
    Ok(WedgeOperator { base_dim: k, m: w })
}

/// `||∧²A|| = a1(A) a2(A)`.
pub fn wedge_norm(a: &ComplexOperator) -> Result<f64> {
    wedge_norm_matrix(a.matrix())
}

pub(crate) fn wedge_norm_matrix(m: &CMatrix) -> Result<f64> {
    match m.nrows() {
        0 | 1 => Err(Error::Degenerate("second exterior power needs dimension >= 2")),
        2 => Ok((m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm()),
        _ => {
            let s = SVD::new(m.clone(), false, false).singular_values;
            let mut s: Vec<f64> = s.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            Ok(s[0] * s[1])
        }
    }
}

/// A unit `x` maximizing `||A x||`.
///
/// When the top singular value is degenerate the choice is made deterministic: the
/// standard basis vector with the largest component in the top singular subspace
/// (smallest index on ties) is projected onto that subspace.
pub fn top_right_singular_vector(a: &ComplexOperator) -> Result<ProjectivePoint> {
    top_right_singular_vector_matrix(a.matrix())
}

pub(crate) fn top_right_singular_vector_matrix(m: &CMatrix) -> Result<ProjectivePoint> {
    let k = m.nrows();
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Err(Error::Degenerate("zero operator has no maximizing direction"));
    }
    let tie = smax * (1.0 - 8.0 * f64::EPSILON);
    let top: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= tie).collect();
    if top.len() == 1 {
        let v = v_t.row(top[0]).adjoint();
        return ProjectivePoint::new(v);
    }
    // Projector onto the degenerate top subspace.
    let mut p = CMatrix::zeros(k, k);
    for &i in &top {
        let v = v_t.row(i).adjoint();
        p += &v * v.adjoint();
    }
    let mut best = 0;
    let mut best_w = -1.0;
    for j in 0..k {
        let w = p[(j, j)].re;
        if w > best_w + 1e-12 {
            best = j;
            best_w = w;
        }
    }
    ProjectivePoint::new(p.column(best).into_owned())
}
