//! Mean dynamics: the Lindblad generator, its semigroup and stationary states.

use nalgebra::{Schur, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    c, CMatrix, CVector, ComplexOperator, DensityMatrix, HermitianOperator, C64,
};

/// Eigenvalues of the generator below this fraction of its norm count as zero.
pub const GAP_TOL: f64 = 1e-8;
const PROJECTOR_TOL: f64 = 1e-10;
/// Seed of the random kernel combination used to split stationary blocks.
const SPLIT_SEED: u64 = 0x5eed_b10c;

/// `(H, {L_i}, {C_j})`: Hamiltonian, diffusive channels, jump channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct OperatorModel {
    h: HermitianOperator,
    diffusive: Vec<ComplexOperator>,
    jump: Vec<ComplexOperator>,
}

/// On-disk model layout.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    #[serde(rename = "H")]
    h: ComplexOperator,
    #[serde(default)]
    diffusive: Vec<ComplexOperator>,
    #[serde(default)]
    jump: Vec<ComplexOperator>,
}

impl TryFrom<ModelFile> for OperatorModel {
    type Error = Error;
    fn try_from(f: ModelFile) -> Result<Self> {
        if f.h.dim() != f.dim {
            return Err(Error::DimensionMismatch {
                expected: f.dim,
                got: f.h.dim(),
            });
        }
        OperatorModel::new(HermitianOperator::new(f.h)?, f.diffusive, f.jump)
    }
}

impl From<OperatorModel> for ModelFile {
    fn from(m: OperatorModel) -> Self {
        ModelFile {
            dim: m.dim(),
            h: m.h.into_operator(),
            diffusive: m.diffusive,
            jump: m.jump,
        }
    }
}

impl OperatorModel {
    pub fn new(
        h: HermitianOperator,
        diffusive: Vec<ComplexOperator>,
        jump: Vec<ComplexOperator>,
    ) -> Result<Self> {
        let k = h.dim();
        if k == 0 {
            return Err(Error::Degenerate("model dimension must be positive"));
        }
        if let Some(bad) = diffusive.iter().chain(jump.iter()).find(|x| x.dim() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: bad.dim(),
            });
        }
        Ok(Self { h, diffusive, jump })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn diffusive(&self) -> &[ComplexOperator] {
        &self.diffusive
    }

    pub fn jump(&self) -> &[ComplexOperator] {
        &self.jump
    }

    pub fn has_noise(&self) -> bool {
        !(self.diffusive.is_empty() && self.jump.is_empty())
    }

    /// `K = -iH - 1/2 (sum L_i* L_i + sum C_j* C_j)`
    pub fn k_operator(&self) -> ComplexOperator {
        let mut m = self.h.matrix() * c(0.0, -1.0);
        for v in self.diffusive.iter().chain(self.jump.iter()) {
            m -= v.matrix().adjoint() * v.matrix() * c(0.5, 0.0);
        }
        ComplexOperator::from_matrix_unchecked(m)
    }

    /// Same model with every operator conjugated, `X -> U X U*`.
    pub fn conjugated(&self, u: &ComplexOperator) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.dim(),
            });
        }
        let conj = |x: &ComplexOperator| &(u * x) * &u.adjoint();
        Self::new(
            HermitianOperator::hermitian_part(&conj(self.h.as_operator())),
            self.diffusive.iter().map(conj).collect(),
            self.jump.iter().map(conj).collect(),
        )
    }

    /// Direct sum of two models acting on orthogonal blocks. Channels are padded with zeros.
    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        let (k1, k2) = (self.dim(), other.dim());
        let embed = |a: Option<&CMatrix>, b: Option<&CMatrix>| {
            let mut m = CMatrix::zeros(k1 + k2, k1 + k2);
            if let Some(a) = a {
                m.view_mut((0, 0), (k1, k1)).copy_from(a);
            }
            if let Some(b) = b {
                m.view_mut((k1, k1), (k2, k2)).copy_from(b);
            }
            ComplexOperator::from_matrix_unchecked(m)
        };
        let pair = |xs: &[ComplexOperator], ys: &[ComplexOperator]| -> Vec<ComplexOperator> {
            let n = xs.len().max(ys.len());
            (0..n)
                .map(|i| embed(xs.get(i).map(|x| x.matrix()), ys.get(i).map(|y| y.matrix())))
                .collect()
        };
        Self::new(
            HermitianOperator::hermitian_part(&embed(Some(self.h.matrix()), Some(other.h.matrix()))),
            pair(&self.diffusive, &other.diffusive),
            pair(&self.jump, &other.jump),
        )
    }

    fn channels(&self) -> impl Iterator<Item = &ComplexOperator> {
        self.diffusive.iter().chain(self.jump.iter())
    }
}

fn check_dim(model: &OperatorModel, k: usize) -> Result<()> {
    if model.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: k,
        });
    }
    Ok(())
}

/// `L(rho) = -i[H, rho] + sum (V rho V* - 1/2 {V* V, rho})`
pub fn lindblad_apply_matrix(model: &OperatorModel, rho: &CMatrix) -> CMatrix {
    let h = model.h.matrix();
    let mut out = (h * rho - rho * h) * c(0.0, -1.0);
    for v in model.channels() {
        let v = v.matrix();
        let vd = v.adjoint();
        let vdv = &vd * v;
        out += v * rho * &vd - (&vdv * rho + rho * &vdv) * c(0.5, 0.0);
    }
    out
}

pub fn lindblad_apply(model: &OperatorModel, rho: &HermitianOperator) -> Result<HermitianOperator> {
    check_dim(model, rho.dim())?;
    let out = lindblad_apply_matrix(model, rho.matrix());
    Ok(HermitianOperator::hermitian_part(
        &ComplexOperator::from_matrix_unchecked(out),
    ))
}

/// Column stacking: `vec(A X B) = (B^T ⊗ A) vec(X)`.
pub fn vectorized_generator(model: &OperatorModel) -> CMatrix {
    let k = model.dim();
    let id = CMatrix::identity(k, k);
    let h = model.h.matrix();
    let mut g = id.kronecker(h) * c(0.0, -1.0) + h.transpose().kronecker(&id) * c(0.0, 1.0);
    for v in model.channels() {
        let v = v.matrix();
        let vdv = v.adjoint() * v;
        g += v.conjugate().kronecker(v);
        g -= id.kronecker(&vdv) * c(0.5, 0.0);
        g -= vdv.transpose().kronecker(&id) * c(0.5, 0.0);
    }
    g
}

pub(crate) fn stack(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub(crate) fn unstack(v: &CVector, k: usize) -> CMatrix {
    CMatrix::from_column_slice(k, k, v.as_slice())
}

/// `e^{tL}` as a `k² x k²` matrix.
pub fn semigroup_matrix(model: &OperatorModel, t: f64) -> Result<CMatrix> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime(t));
    }
    Ok((vectorized_generator(model) * c(t, 0.0)).exp())
}

/// `e^{tL}(rho)` before PSD repair, Hermitian part only.
pub fn evolve_master_raw(
    model: &OperatorModel,
    rho0: &HermitianOperator,
    t: f64,
) -> Result<HermitianOperator> {
    check_dim(model, rho0.dim())?;
    let e = semigroup_matrix(model, t)?;
    let out = unstack(&(e * stack(rho0.matrix())), model.dim());
    Ok(HermitianOperator::hermitian_part(
        &ComplexOperator::from_matrix_unchecked(out),
    ))
}

pub fn evolve_master(model: &OperatorModel, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        check_dim(model, rho0.dim())?;
        return Ok(rho0.clone());
    }
    let raw = evolve_master_raw(model, rho0.as_hermitian(), t)?;
    DensityMatrix::repair(raw.as_operator())
}

/// Result of the ergodicity check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub holds: bool,
    pub stationary_state: Option<DensityMatrix>,
    /// `-max Re mu` over the nonzero spectrum of the generator; zero when there is none.
    pub spectral_gap: f64,
    pub zero_multiplicity: usize,
    pub kernel_dim: usize,
}

/// Eigenvalues of the vectorized generator.
pub fn generator_spectrum(model: &OperatorModel) -> Result<Vec<C64>> {
    schur_diagonal(&vectorized_generator(model))
}

/// Eigenvalues via a Schur form. Rather than `eigenvalues()`, which gives up on non-normal
/// input. The shifted QR sweep can stall on exactly structured matrices, so on failure it is
/// retried on a seeded random unitary conjugate.
fn schur_diagonal(g: &CMatrix) -> Result<Vec<C64>> {
    let n = g.nrows();
    let budget = 200 * n.max(1);
    let diag = |t: CMatrix| (0..t.nrows()).map(|i| t[(i, i)]).collect::<Vec<_>>();
    if let Some(s) = Schur::try_new(g.clone(), f64::EPSILON, budget) {
        return Ok(diag(s.unpack().1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SPLIT_SEED);
    for _ in 0..16 {
        let z = CMatrix::from_fn(n, n, |_, _| {
            c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let q = z.qr().q();
        let h = q.adjoint() * g * &q;
        if let Some(s) = Schur::try_new(h, f64::EPSILON, budget) {
            return Ok(diag(s.unpack().1));
        }
    }
    Err(Error::Degenerate("Schur iteration did not converge"))
}

fn generator_norm(g: &CMatrix) -> f64 {
    ComplexOperator::from_matrix_unchecked(g.clone()).op_norm()
}

pub fn check_l_erg(model: &OperatorModel) -> Result<ErgodicityReport> {
    let g = vectorized_generator(model);
    let tol = GAP_TOL * generator_norm(&g);
    let spectrum = generator_spectrum(model)?;
    let zero_multiplicity = spectrum.iter().filter(|mu| mu.norm() <= tol).count();
    let spectral_gap = spectrum
        .iter()
        .filter(|mu| mu.norm() > tol)
        .map(|mu| -mu.re)
        .fold(f64::INFINITY, f64::min);
    let spectral_gap = if spectral_gap.is_finite() { spectral_gap } else { 0.0 };
    let decomposition = stationary_decomposition(model)?;
    let holds = zero_multiplicity == 1;
    let stationary_state = if holds {
        decomposition.states.first().cloned()
    } else {
        None
    };
    Ok(ErgodicityReport {
        holds,
        stationary_state,
        spectral_gap,
        zero_multiplicity,
        kernel_dim: decomposition.kernel_dim,
    })
}

/// Extremal stationary states and the derived block structure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationaryDecomposition {
    pub states: Vec<DensityMatrix>,
    pub kernel_dim: usize,
    /// `k` minus the rank of the summed supports.
    pub transient_dim: usize,
    /// Kernel larger than the number of blocks: some block carries a multiplicity
    /// space, and the states returned there are one valid extremal choice among many.
    pub multiplicity_flag: bool,
}

pub fn stationary_states(model: &OperatorModel) -> Result<Vec<DensityMatrix>> {
    Ok(stationary_decomposition(model)?.states)
}

/// Null space basis of `g` (columns) and of `g*`, by SVD.
fn kernels(g: &CMatrix) -> (CMatrix, CMatrix) {
    let n = g.nrows();
    let svd = SVD::new(g.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = GAP_TOL * smax;
    let idx: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    let mut right = CMatrix::zeros(n, idx.len());
    let mut left = CMatrix::zeros(n, idx.len());
    for (col, &i) in idx.iter().enumerate() {
        right.set_column(col, &v_t.row(i).adjoint());
        left.set_column(col, &u.column(i));
    }
    (right, left)
}

/// Positive square root and inverse square root of a positive definite matrix.
fn sqrt_pair(m: &HermitianOperator) -> (CMatrix, CMatrix) {
    let (vals, vecs) = m.eigh();
    let s: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let si: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    (
        HermitianOperator::from_spectrum(&s, &vecs).matrix().clone(),
        HermitianOperator::from_spectrum(&si, &vecs).matrix().clone(),
    )
}

pub fn stationary_decomposition(model: &OperatorModel) -> Result<StationaryDecomposition> {
    let k = model.dim();
    let g = vectorized_generator(model);
    let (right, left) = kernels(&g);
    let kernel_dim = right.ncols();
    if kernel_dim == 0 {
        return Err(Error::Degenerate("generator has trivial kernel"));
    }

    // Ergodic projector applied to Id/k: a fixed point of maximal support.
    let overlap = left.adjoint() * &right;
    let inv = overlap
        .try_inverse()
        .ok_or(Error::Degenerate("zero eigenvalue of generator is not semisimple"))?;
    let mixed = stack(&(CMatrix::identity(k, k) * c(1.0 / k as f64, 0.0)));
    let rho_max = unstack(&(&right * (inv * (left.adjoint() * mixed))), k);
    let rho_max = DensityMatrix::repair(&ComplexOperator::from_matrix_unchecked(rho_max))?;

    let (vals, vecs) = rho_max.as_hermitian().eigh();
    let top = vals.iter().copied().fold(0.0, f64::max);
    let support: Vec<usize> = (0..k).filter(|&i| vals[i] > 1e-9 * top).collect();
    let r = support.len();
    let mut w = CMatrix::zeros(k, r);
    for (col, &i) in support.iter().enumerate() {
        w.set_column(col, &vecs.column(i));
    }
    let rho_r = HermitianOperator::hermitian_part(&ComplexOperator::from_matrix_unchecked(
        w.adjoint() * rho_max.matrix() * &w,
    ));
    let (sq, isq) = sqrt_pair(&rho_r);

    // A random Hermitian kernel element, reduced to the support and whitened by rho_r.
    // Its eigenspaces are the minimal invariant blocks.
    let mut rng = ChaCha8Rng::seed_from_u64(SPLIT_SEED);
    let mut y = CMatrix::zeros(r, r);
    for col in 0..kernel_dim {
        let f = unstack(&right.column(col).into_owned(), k);
        let herm = (&f + f.adjoint()) * c(0.5, 0.0);
        let anti = (&f - f.adjoint()) * c(0.0, -0.5);
        for part in [herm, anti] {
            let a: f64 = StandardNormal.sample(&mut rng);
            y += &isq * (w.adjoint() * part * &w) * &isq * c(a, 0.0);
        }
    }
    let y = HermitianOperator::hermitian_part(&ComplexOperator::from_matrix_unchecked(y));
    let (evals, evecs) = y.eigh();
    let scale = evals.iter().map(|v| v.abs()).fold(1e-300, f64::max);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..r {
        match clusters.last_mut() {
            Some(cl) if (evals[i] - evals[*cl.last().unwrap()]).abs() <= 1e-6 * scale => cl.push(i),
            _ => clusters.push(vec![i]),
        }
    }

    let mut states = Vec::with_capacity(clusters.len());
    for cl in &clusters {
        let mut p = CMatrix::zeros(r, r);
        for &i in cl {
            let v = evecs.column(i);
            p += &v * v.adjoint();
        }
        let block = &w * &sq * p * &sq * w.adjoint();
        states.push(DensityMatrix::repair(&ComplexOperator::from_matrix_unchecked(block))?);
    }
    Ok(StationaryDecomposition {
        multiplicity_flag: kernel_dim > states.len(),
        states,
        kernel_dim,
        transient_dim: k - r,
    })
}

/// Whether `(Id - π) X π = 0` for every channel operator `X`.
pub fn invariant_projector_test(model: &OperatorModel, pi: &HermitianOperator) -> Result<bool> {
    check_dim(model, pi.dim())?;
    let p = pi.matrix();
    let defect = (p * p - p).norm();
    if defect > PROJECTOR_TOL * p.norm().max(1.0) {
        return Err(Error::NotProjector(defect));
    }
    let q = CMatrix::identity(model.dim(), model.dim()) - p;
    Ok(model.channels().all(|x| {
        let r = &q * x.matrix() * p;
        r.norm() <= PROJECTOR_TOL * x.frobenius_norm().max(1.0)
    }))
}
