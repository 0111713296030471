//! Stochastic unravelings: state vector (SSE), density matrix (SME) and the linear
//! propagator `S_t`.
//!
//! Every step draws the same increments in the same order (one `N(0, dt)` per diffusive
//! channel, then one uniform for the jump decision), so SSE, SME and propagator runs fed
//! from one stream follow the same measurement record.
//!
//! The default scheme is a split step. Between jumps the state is mapped by
//! `G = e^{-iH dt} (Id + K_d dt + Σ L_i ΔW_i)` with `K_d = -½ Σ (L_i*L_i + C_j*C_j)` and then
//! renormalized. At most one jump happens per step; channel `j` fires with probability
//! `n_j dt` and maps the state by `C_j`.

mod analysis;

pub use analysis::{
    coupling_distance, ensemble_projector_mean, estimate_f, likelihood_ensemble, step_index,
    CouplingCurve, EnsembleMean, FCurve,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::OperatorModel;
use crate::operator::{
    c, top_right_singular_vector_matrix, wedge_norm_matrix, CMatrix, CVector, ComplexOperator,
    DensityMatrix, HermitianOperator, ProjectivePoint,
};

/// Jump outcomes with `‖C_j x‖²` below this are treated as no-jump.
pub const DEGENERATE_JUMP: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Split step, then normalize. Norm and positivity are exact.
    #[default]
    LinearNormalize,
    /// Plain Euler–Maruyama of the nonlinear equations, kept for cross-checks.
    EulerDirect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default = "default_max_jump_prob")]
    pub max_jump_prob: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_max_jump_prob() -> f64 {
    0.1
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            dt,
            horizon,
            seed,
            max_jump_prob: default_max_jump_prob(),
            scheme: Scheme::LinearNormalize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be nonnegative, got {}", self.horizon)));
        }
        if !(self.max_jump_prob > 0.0 && self.max_jump_prob <= 1.0) {
            return Err(Error::Config(format!(
                "max_jump_prob must lie in (0, 1], got {}",
                self.max_jump_prob
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Independent stream for trajectory `index` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Random input of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Increments {
    /// Brownian increments `ΔB_i ~ N(0, dt)`.
    pub db: Vec<f64>,
    /// Uniform on `[0, 1)`, compared against cumulative jump probabilities.
    pub u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepEvent {
    Diffusive,
    Jump(usize),
    /// A jump was drawn on a channel that annihilates the state; treated as no-jump.
    DegenerateJump(usize),
}

impl StepEvent {
    pub fn jumped(&self) -> Option<usize> {
        match self {
            StepEvent::Jump(j) => Some(*j),
            _ => None,
        }
    }
}

/// Which law the propagator is simulated under.
#[derive(Clone, Debug)]
pub enum MeasureMode {
    /// Unit-rate jumps and centered Brownian increments.
    Reference,
    /// The physical law started from the propagator's weight state.
    Physical,
}

/// Per-model operators for a fixed `dt`.
#[derive(Clone, Debug)]
pub struct Stepper {
    k: usize,
    dt: f64,
    sqrt_dt: f64,
    max_jump_prob: f64,
    scheme: Scheme,
    u: CMatrix,
    kd: CMatrix,
    kfull: CMatrix,
    l: Vec<CMatrix>,
    lsum: Vec<CMatrix>,
    cj: Vec<CMatrix>,
    cdc: Vec<CMatrix>,
}

/// Scratch buffers for vector steps.
#[derive(Clone, Debug)]
pub struct Workspace {
    y: CVector,
    tmp: CVector,
    cx: Vec<CVector>,
    p: Vec<f64>,
}

impl Stepper {
    pub fn new(model: &OperatorModel, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let k = model.dim();
        let h = model.hamiltonian().matrix();
        let u = (h * c(0.0, -cfg.dt)).exp();
        let mut kd = CMatrix::zeros(k, k);
        for v in model.diffusive().iter().chain(model.jump()) {
            kd -= v.matrix().adjoint() * v.matrix() * c(0.5, 0.0);
        }
        let kfull = &kd + h * c(0.0, -1.0);
        Ok(Self {
            k,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            max_jump_prob: cfg.max_jump_prob,
            scheme: cfg.scheme,
            u,
            kd,
            kfull,
            l: model.diffusive().iter().map(|x| x.matrix().clone()).collect(),
            lsum: model
                .diffusive()
                .iter()
                .map(|x| x.matrix() + x.matrix().adjoint())
                .collect(),
            cj: model.jump().iter().map(|x| x.matrix().clone()).collect(),
            cdc: model
                .jump()
                .iter()
                .map(|x| x.matrix().adjoint() * x.matrix())
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_diffusive(&self) -> usize {
        self.l.len()
    }

    pub fn n_jump(&self) -> usize {
        self.cj.len()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            y: CVector::zeros(self.k),
            tmp: CVector::zeros(self.k),
            cx: vec![CVector::zeros(self.k); self.cj.len()],
            p: vec![0.0; self.cj.len()],
        }
    }

    pub fn new_increments(&self) -> Increments {
        Increments {
            db: vec![0.0; self.l.len()],
            u: 0.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, inc: &mut Increments) {
        for db in inc.db.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *db = self.sqrt_dt * z;
        }
        inc.u = rng.random::<f64>();
    }

    fn check_budget(&self, total: f64) -> Result<()> {
        if total > self.max_jump_prob {
            return Err(Error::JumpBudget {
                total,
                budget: self.max_jump_prob,
            });
        }
        Ok(())
    }

    /// Channel selected by `u` against cumulative probabilities `p`, if any.
    fn select(p: &[f64], u: f64) -> Option<usize> {
        let mut acc = 0.0;
        for (j, &pj) in p.iter().enumerate() {
            acc += pj;
            if u < acc {
                return Some(j);
            }
        }
        None
    }

    /// One SSE step on a unit vector, in place.
    pub fn sse_step(&self, x: &mut CVector, inc: &Increments, w: &mut Workspace) -> Result<StepEvent> {
        let mut total = 0.0;
        for j in 0..self.cj.len() {
            w.cx[j].gemv(c(1.0, 0.0), &self.cj[j], x, c(0.0, 0.0));
            w.p[j] = w.cx[j].norm_squared() * self.dt;
            total += w.p[j];
        }
        self.check_budget(total)?;
        let mut event = StepEvent::Diffusive;
        if let Some(j) = Self::select(&w.p, inc.u) {
            let nj = w.p[j] / self.dt;
            if nj >= DEGENERATE_JUMP {
                x.copy_from(&w.cx[j]);
                x.unscale_mut(nj.sqrt());
                return Ok(StepEvent::Jump(j));
            }
            event = StepEvent::DegenerateJump(j);
        }

        match self.scheme {
            Scheme::LinearNormalize => {
                w.y.copy_from(x);
                w.y.gemv(c(self.dt, 0.0), &self.kd, x, c(1.0, 0.0));
                for i in 0..self.l.len() {
                    w.tmp.gemv(c(1.0, 0.0), &self.l[i], x, c(0.0, 0.0));
                    let v = 2.0 * x.dotc(&w.tmp).re;
                    let dw = inc.db[i] + v * self.dt;
                    w.y.axpy(c(dw, 0.0), &w.tmp, c(1.0, 0.0));
                }
                x.gemv(c(1.0, 0.0), &self.u, &w.y, c(0.0, 0.0));
            }
            Scheme::EulerDirect => {
                // dx = D(x)x dt + Σ (L_i − ½v_i) x dB_i
                let half_n: f64 = w.p.iter().sum::<f64>() / self.dt * 0.5;
                w.y.copy_from(x);
                w.y.gemv(c(self.dt, 0.0), &self.kfull, x, c(1.0 + half_n * self.dt, 0.0));
                for i in 0..self.l.len() {
                    w.tmp.gemv(c(1.0, 0.0), &self.l[i], x, c(0.0, 0.0));
                    let v = 2.0 * x.dotc(&w.tmp).re;
                    let db = inc.db[i];
                    // ½ v (L − ¼ v) x dt + (L − ½ v) x dB
                    w.y.axpy(c(0.5 * v * self.dt + db, 0.0), &w.tmp, c(1.0, 0.0));
                    w.y.axpy(c(-0.125 * v * v * self.dt - 0.5 * v * db, 0.0), x, c(1.0, 0.0));
                }
                x.copy_from(&w.y);
            }
        }
        let n = x.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Degenerate("state vector vanished; reduce dt"));
        }
        x.unscale_mut(n);
        Ok(event)
    }

    /// One SME step, in place. `rho` must be Hermitian with unit trace.
    pub fn sme_step(&self, rho: &mut CMatrix, inc: &Increments) -> Result<StepEvent> {
        let mut p = Vec::with_capacity(self.cj.len());
        for cdc in &self.cdc {
            p.push((cdc * &*rho).trace().re.max(0.0) * self.dt);
        }
        self.check_budget(p.iter().sum())?;
        let mut event = StepEvent::Diffusive;
        if let Some(j) = Self::select(&p, inc.u) {
            let nj = p[j] / self.dt;
            if nj >= DEGENERATE_JUMP {
                let out = &self.cj[j] * &*rho * self.cj[j].adjoint();
                *rho = hermitize(out / c(nj, 0.0));
                return Ok(StepEvent::Jump(j));
            }
            event = StepEvent::DegenerateJump(j);
        }
        match self.scheme {
            Scheme::LinearNormalize => {
                let mut g = CMatrix::identity(self.k, self.k) + &self.kd * c(self.dt, 0.0);
                for i in 0..self.l.len() {
                    let v = (&self.lsum[i] * &*rho).trace().re;
                    g += &self.l[i] * c(inc.db[i] + v * self.dt, 0.0);
                }
                let g = &self.u * g;
                let out = &g * &*rho * g.adjoint();
                let tr = out.trace().re;
                if !(tr > 0.0) || !tr.is_finite() {
                    return Err(Error::Degenerate("density matrix vanished; reduce dt"));
                }
                *rho = hermitize(out / c(tr, 0.0));
            }
            Scheme::EulerDirect => {
                let r = &*rho;
                let mut d = &self.kfull * r + r * self.kfull.adjoint();
                for l in &self.l {
                    d += l * r * l.adjoint();
                }
                // C ρ C* of the Lindblad part cancels against the jump compensator
                for cdc in &self.cdc {
                    let n = (cdc * r).trace().re;
                    d += r * c(n, 0.0);
                }
                let mut out = r + d * c(self.dt, 0.0);
                for i in 0..self.l.len() {
                    let v = (&self.lsum[i] * r).trace().re;
                    let l = &self.l[i];
                    out += (l * r + r * l.adjoint() - r * c(v, 0.0)) * c(inc.db[i], 0.0);
                }
                let repaired = DensityMatrix::repair(&ComplexOperator::from_matrix_unchecked(out))?;
                *rho = repaired.matrix().clone();
            }
        }
        Ok(event)
    }

    /// One propagator step, in place.
    pub fn propagator_step(
        &self,
        p: &mut PropagatorState,
        inc: &Increments,
        mode: &MeasureMode,
    ) -> Result<StepEvent> {
        p.t += self.dt;
        if p.log_scale == f64::NEG_INFINITY {
            return Ok(StepEvent::Diffusive);
        }
        let np = self.cj.len() as f64;
        let physical = matches!(mode, MeasureMode::Physical);
        let rho_t = if physical {
            let m = &p.s * p.weight.matrix() * p.s.adjoint();
            let tr = m.trace().re;
            m / c(tr, 0.0)
        } else {
            CMatrix::zeros(0, 0)
        };

        let probs: Vec<f64> = if physical {
            self.cdc
                .iter()
                .map(|cdc| (cdc * &rho_t).trace().re.max(0.0) * self.dt)
                .collect()
        } else {
            vec![self.dt; self.cj.len()]
        };
        self.check_budget(probs.iter().sum())?;

        let mut event = StepEvent::Diffusive;
        let mut jumped = false;
        if let Some(j) = Self::select(&probs, inc.u) {
            if physical && probs[j] / self.dt < DEGENERATE_JUMP {
                event = StepEvent::DegenerateJump(j);
                p.degenerate += 1;
            } else {
                p.left_mul(&self.cj[j]);
                p.jumps[j] += 1;
                event = StepEvent::Jump(j);
                jumped = true;
            }
        }
        if !jumped {
            let mut g = CMatrix::identity(self.k, self.k) * c(1.0 + 0.5 * np * self.dt, 0.0)
                + &self.kd * c(self.dt, 0.0);
            for i in 0..self.l.len() {
                let drift = if physical {
                    (&self.lsum[i] * &rho_t).trace().re * self.dt
                } else {
                    0.0
                };
                g += &self.l[i] * c(inc.db[i] + drift, 0.0);
            }
            p.left_mul(&(&self.u * g));
        }
        p.rescale();
        Ok(event)
    }
}

fn hermitize(m: CMatrix) -> CMatrix {
    (&m + m.adjoint()) * c(0.5, 0.0)
}

/// Linear propagator with its scale tracked separately: `S_t = e^{log_scale} · s`.
#[derive(Clone, Debug)]
pub struct PropagatorState {
    pub t: f64,
    s: CMatrix,
    log_scale: f64,
    /// `ln Z_t = ln tr(S_t* S_t ρ)` for the weight state `ρ`.
    z_log: f64,
    weight: DensityMatrix,
    pub jumps: Vec<u64>,
    pub degenerate: u64,
    wedge: Option<WedgeTrack>,
}

/// `∧²S_t` carried alongside `S_t`, with its own scale.
#[derive(Clone, Debug)]
struct WedgeTrack {
    w: CMatrix,
    log_scale: f64,
}

/// Matrix of 2×2 minors of `a` over index pairs `i < j`, in lexicographic order.
pub fn compound2(a: &CMatrix) -> CMatrix {
    let k = a.nrows();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    CMatrix::from_fn(pairs.len(), pairs.len(), |r, col| {
        let (i, j) = pairs[r];
        let (l, m) = pairs[col];
        a[(i, l)] * a[(j, m)] - a[(i, m)] * a[(j, l)]
    })
}

impl PropagatorState {
    /// `S_0 = Id`, `Z_0 = 1`.
    pub fn new(model: &OperatorModel, weight: DensityMatrix) -> Result<Self> {
        if weight.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: weight.dim(),
            });
        }
        let k = model.dim();
        Ok(Self {
            t: 0.0,
            s: CMatrix::identity(k, k),
            log_scale: 0.0,
            z_log: 0.0,
            weight,
            jumps: vec![0; model.jump().len()],
            degenerate: 0,
            wedge: None,
        })
    }

    /// Also propagate `∧²S_t` factor by factor. Without it [`Self::log_wedge_norm`] reads the
    /// wedge norm off `S_t`, which loses all relative accuracy once `S_t` is within about
    /// `1e-16` of rank one.
    pub fn with_wedge_tracking(mut self) -> Self {
        let k = self.s.nrows();
        if k >= 2 {
            self.wedge = Some(WedgeTrack {
                w: compound2(&self.s),
                log_scale: 2.0 * self.log_scale,
            });
        }
        self
    }

    fn left_mul(&mut self, f: &CMatrix) {
        self.s = f * &self.s;
        if let Some(tr) = &mut self.wedge {
            tr.w = compound2(f) * &tr.w;
            let n = tr.w.norm();
            if n > 0.0 && n.is_finite() {
                tr.w /= c(n, 0.0);
                tr.log_scale += n.ln();
            } else {
                tr.log_scale = f64::NEG_INFINITY;
            }
        }
    }

    /// Rescaled representative `s`; the Frobenius norm is `min(√k, 2)` unless `S_t = 0`.
    pub fn s(&self) -> &CMatrix {
        &self.s
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn z_log(&self) -> f64 {
        self.z_log
    }

    pub fn weight(&self) -> &DensityMatrix {
        &self.weight
    }

    pub fn is_annihilated(&self) -> bool {
        self.log_scale == f64::NEG_INFINITY
    }

    /// `S_t` with the scale folded back in. Overflows for long runs; prefer `s()`.
    pub fn true_s(&self) -> CMatrix {
        &self.s * c(self.log_scale.exp(), 0.0)
    }

    /// `ln ‖∧²S_t‖`.
    pub fn log_wedge_norm(&self) -> Result<f64> {
        if self.is_annihilated() {
            return Ok(f64::NEG_INFINITY);
        }
        if let Some(tr) = &self.wedge {
            if tr.log_scale == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let top = ComplexOperator::from_matrix_unchecked(tr.w.clone()).op_norm();
            return Ok(top.ln() + tr.log_scale);
        }
        Ok(wedge_norm_matrix(&self.s)?.ln() + 2.0 * self.log_scale)
    }

    fn rescale(&mut self) {
        let f = self.s.norm();
        if !(f > 0.0) || !f.is_finite() {
            self.s.fill(c(0.0, 0.0));
            self.log_scale = f64::NEG_INFINITY;
            self.z_log = f64::NEG_INFINITY;
            return;
        }
        let target = (self.s.nrows() as f64).sqrt().min(2.0);
        self.s *= c(target / f, 0.0);
        self.log_scale += (f / target).ln();
        let z = (&self.s * self.weight.matrix() * self.s.adjoint()).trace().re;
        self.z_log = if z > 0.0 {
            2.0 * self.log_scale + z.ln()
        } else {
            f64::NEG_INFINITY
        };
    }
}

/// `M_t = S_t* S_t / tr(S_t* S_t)`.
pub fn likelihood_matrix(p: &PropagatorState) -> Result<DensityMatrix> {
    let m = p.s.adjoint() * &p.s;
    let tr = m.trace().re;
    if !(tr > 0.0) {
        return Err(Error::Degenerate("propagator vanished; likelihood undefined"));
    }
    let h = HermitianOperator::hermitian_part(&ComplexOperator::from_matrix_unchecked(m / c(tr, 0.0)));
    DensityMatrix::repair(h.as_operator())
}

/// `ẑ_t = argmax ‖S_t x‖` and `ŷ_t = S_t · ẑ_t`.
pub fn ml_estimate(p: &PropagatorState) -> Result<(ProjectivePoint, ProjectivePoint)> {
    ml_estimate_matrix(&p.s)
}

pub(crate) fn ml_estimate_matrix(s: &CMatrix) -> Result<(ProjectivePoint, ProjectivePoint)> {
    let z = top_right_singular_vector_matrix(s)?;
    let y = ProjectivePoint::new(s * z.vector())?;
    Ok((z, y))
}

/// One SSE step from a projective point, drawing fresh increments from `rng`.
pub fn sse_step<R: Rng + ?Sized>(
    model: &OperatorModel,
    x: &ProjectivePoint,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(ProjectivePoint, StepEvent, Increments)> {
    let st = Stepper::new(model, cfg)?;
    let mut inc = st.new_increments();
    st.draw(rng, &mut inc);
    let mut v = x.vector().clone();
    let mut w = st.workspace();
    let ev = st.sse_step(&mut v, &inc, &mut w)?;
    Ok((ProjectivePoint::new(v)?, ev, inc))
}

pub fn sme_step<R: Rng + ?Sized>(
    model: &OperatorModel,
    rho: &DensityMatrix,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(DensityMatrix, StepEvent)> {
    let st = Stepper::new(model, cfg)?;
    let mut inc = st.new_increments();
    st.draw(rng, &mut inc);
    let mut m = rho.matrix().clone();
    let ev = st.sme_step(&mut m, &inc)?;
    Ok((DensityMatrix::repair(&ComplexOperator::from_matrix_unchecked(m))?, ev))
}

pub fn propagate_s<R: Rng + ?Sized>(
    model: &OperatorModel,
    p: &PropagatorState,
    cfg: &SimConfig,
    rng: &mut R,
    mode: &MeasureMode,
) -> Result<PropagatorState> {
    let st = Stepper::new(model, cfg)?;
    let mut inc = st.new_increments();
    st.draw(rng, &mut inc);
    let mut out = p.clone();
    st.propagator_step(&mut out, &inc, mode)?;
    Ok(out)
}

/// Snapshot of a trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryState<S> {
    pub t: f64,
    pub state: S,
    pub jump_counts: Vec<u64>,
}

/// Run one SSE path for `cfg.horizon`, calling `observe` after every step with
/// `(step index, state, event)`.
pub fn run_sse<F>(
    model: &OperatorModel,
    x0: &ProjectivePoint,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut observe: F,
) -> Result<TrajectoryState<ProjectivePoint>>
where
    F: FnMut(usize, &CVector, StepEvent),
{
    let st = Stepper::new(model, cfg)?;
    let mut inc = st.new_increments();
    let mut w = st.workspace();
    let mut x = x0.vector().clone();
    let mut counts = vec![0u64; st.n_jump()];
    let n = cfg.steps();
    for step in 1..=n {
        st.draw(rng, &mut inc);
        let ev = st.sse_step(&mut x, &inc, &mut w)?;
        if let StepEvent::Jump(j) = ev {
            counts[j] += 1;
        }
        observe(step, &x, ev);
    }
    Ok(TrajectoryState {
        t: n as f64 * cfg.dt,
        state: ProjectivePoint::new(x)?,
        jump_counts: counts,
    })
}
