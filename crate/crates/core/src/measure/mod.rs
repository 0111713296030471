//! Empirical measures on projective space, exact W₁, circle comparisons and rate fits.

pub mod density;
pub mod transport;

use std::f64::consts::PI;

use log::warn;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use density::{qnd_density, thermal_density, AngleDensity, AngleFamily};
pub use transport::{solve as solve_transport, TransportPlan};

use crate::error::{Error, Result};
use crate::lindblad::{check_l_erg, OperatorModel};
use crate::operator::{c, fs_distance_vectors, ProjectivePoint};
use crate::stats::Curve;
use crate::trajectory::{step_index, trajectory_rng, SimConfig, StepEvent, Stepper};

/// Largest `n * m` accepted by [`wasserstein1`].
pub const TRANSPORT_BUDGET: usize = 10_000_000;
/// Default tolerance on `|Y|` for circle membership.
pub const Y_TOL: f64 = 1e-6;
const WEIGHT_TOL: f64 = 1e-10;
/// Integer mass used to quantize unequal weights.
const QUANTUM: f64 = (1u64 << 44) as f64;

/// Finitely supported probability measure on `P(ℂ^k)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<ProjectivePoint>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<ProjectivePoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Degenerate("empty measure"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        let k = atoms[0].dim();
        if let Some(a) = atoms.iter().find(|a| a.dim() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: a.dim() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Config(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    pub fn uniform(atoms: Vec<ProjectivePoint>) -> Result<Self> {
        let w = 1.0 / atoms.len().max(1) as f64;
        let n = atoms.len();
        Self::new(atoms, vec![w; n])
    }

    pub fn dirac(x: ProjectivePoint) -> Self {
        Self {
            atoms: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[ProjectivePoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-15)
    }

    /// Total weight of atoms within `radius` of `x`.
    pub fn mass_near(&self, x: &ProjectivePoint, radius: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(a, _)| fs_distance_vectors(a.vector(), x.vector()) <= radius)
            .map(|(_, w)| w)
            .sum()
    }

    /// One row per atom: `re_0,im_0,...,re_{k-1},im_{k-1},weight`.
    pub fn to_csv(&self) -> String {
        let k = self.dim();
        let mut s = String::new();
        for i in 0..k {
            s.push_str(&format!("re{i},im{i},"));
        }
        s.push_str("weight\n");
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for z in a.vector().iter() {
                s.push_str(&format!("{},{},", z.re, z.im));
            }
            s.push_str(&format!("{w}\n"));
        }
        s
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integer masses summing to `2^44`, by largest remainder.
fn quantize(weights: &[f64]) -> Vec<i64> {
    let total: f64 = weights.iter().sum();
    let scaled: Vec<f64> = weights.iter().map(|w| w / total * QUANTUM).collect();
    let mut q: Vec<i64> = scaled.iter().map(|x| x.floor() as i64).collect();
    let short = QUANTUM as i64 - q.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(short.max(0) as usize) {
        q[i] += 1;
    }
    q
}

/// Optimal transport cost between two weight vectors under `cost`.
///
/// Equal weights on both sides are handled exactly; otherwise weights are quantized to
/// `2^44` units, which perturbs the result by at most `n·m·2^-44·max cost`.
pub fn transport_cost<F>(wa: &[f64], wb: &[f64], uniform: bool, cost: F) -> Result<f64>
where
    F: Fn(usize, usize) -> f64,
{
    let (n, m) = (wa.len(), wb.len());
    if n.saturating_mul(m) > TRANSPORT_BUDGET {
        return Err(Error::TransportBudget {
            n,
            m,
            budget: TRANSPORT_BUDGET,
        });
    }
    if uniform {
        let g = gcd(n, m);
        let supply = vec![(m / g) as i64; n];
        let demand = vec![(n / g) as i64; m];
        return Ok(solve_transport(&supply, &demand, &cost)?.mean_cost());
    }
    let qa = quantize(wa);
    let qb = quantize(wb);
    let ia: Vec<usize> = (0..n).filter(|&i| qa[i] > 0).collect();
    let ib: Vec<usize> = (0..m).filter(|&j| qb[j] > 0).collect();
    let supply: Vec<i64> = ia.iter().map(|&i| qa[i]).collect();
    let demand: Vec<i64> = ib.iter().map(|&j| qb[j]).collect();
    let plan = solve_transport(&supply, &demand, &|i: usize, j: usize| cost(ia[i], ib[j]))?;
    Ok(plan.mean_cost())
}

/// Exact W₁ under the Fubini–Study distance.
pub fn wasserstein1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    let uniform = mu.is_uniform() && nu.is_uniform();
    transport_cost(&mu.weights, &nu.weights, uniform, |i, j| {
        fs_distance_vectors(mu.atoms[i].vector(), nu.atoms[j].vector())
    })
}

/// Bloch coordinates `(X, Y, Z)` of a qubit state.
pub fn bloch(x: &ProjectivePoint) -> Result<[f64; 3]> {
    if x.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: x.dim() });
    }
    let v = x.vector();
    let ab = v[0].conj() * v[1];
    Ok([2.0 * ab.re, 2.0 * ab.im, v[0].norm_sqr() - v[1].norm_sqr()])
}

/// `ι(θ)`: the pure state with Bloch vector `(sinθ, 0, cosθ)`.
pub fn iota(theta: f64) -> ProjectivePoint {
    let h = 0.5 * theta;
    ProjectivePoint::new(crate::operator::CVector::from_vec(vec![c(h.cos(), 0.0), c(h.sin(), 0.0)]))
        .expect("unit vector")
}

/// `θ = atan2(X, Z)` in `(−π, π]`, rejecting states with `|Y| > y_tol`.
pub fn qubit_angle_tol(x: &ProjectivePoint, y_tol: f64) -> Result<f64> {
    let [bx, by, bz] = bloch(x)?;
    if by.abs() > y_tol {
        return Err(Error::OffCircle(by));
    }
    let th = bx.atan2(bz);
    Ok(if th <= -PI { PI } else { th })
}

pub fn qubit_angle(x: &ProjectivePoint) -> Result<f64> {
    qubit_angle_tol(x, Y_TOL)
}

/// Fubini–Study distance between `ι(a)` and `ι(b)`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    (0.5 * (a - b)).sin().abs()
}

/// W₁ between two uniform samples of angles under `|sin((θ−θ′)/2)|`.
pub fn circle_w1_angles(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("empty angle sample"));
    }
    let ha: Vec<(f64, f64)> = a.iter().map(|t| (0.5 * t).sin_cos()).collect();
    let hb: Vec<(f64, f64)> = b.iter().map(|t| (0.5 * t).sin_cos()).collect();
    let wa = vec![1.0 / a.len() as f64; a.len()];
    let wb = vec![1.0 / b.len() as f64; b.len()];
    transport_cost(&wa, &wb, true, |i, j| {
        let (si, ci) = ha[i];
        let (sj, cj) = hb[j];
        (si * cj - ci * sj).abs()
    })
}

/// W₁ between an angle sample and `m_atoms` equal-mass quantile atoms of `reference`.
pub fn circle_w1(samples: &[f64], reference: &AngleDensity, m_atoms: usize) -> Result<f64> {
    let atoms = reference.quantile_atoms(m_atoms)?;
    circle_w1_angles(samples, &atoms)
}

/// Output of [`sample_invariant`].
#[derive(Clone, Debug)]
pub struct InvariantSample {
    pub measure: EmpiricalMeasure,
    pub times: Vec<f64>,
    /// Jumps per channel over the whole run, burn-in included.
    pub jump_counts: Vec<u64>,
    /// Jumps per channel after burn-in.
    pub sampled_jumps: Vec<u64>,
    pub degenerate_jumps: u64,
    pub erg_holds: bool,
}

impl InvariantSample {
    pub fn angles(&self) -> Result<Vec<f64>> {
        self.measure.atoms().iter().map(qubit_angle).collect()
    }
}

/// Thinned states of one long SSE run from `x0`: `burn_in` time is discarded, then a state is
/// kept every `thinning` time units until `n_samples` are collected. `cfg.horizon` is unused.
pub fn sample_invariant(
    model: &OperatorModel,
    x0: &ProjectivePoint,
    cfg: &SimConfig,
    burn_in: f64,
    n_samples: usize,
    thinning: f64,
) -> Result<InvariantSample> {
    if !(burn_in >= 0.0) || !(thinning > 0.0) || n_samples == 0 {
        return Err(Error::Config("need burn_in >= 0, thinning > 0, n_samples > 0".into()));
    }
    let erg_holds = check_l_erg(model)?.holds;
    if !erg_holds {
        warn!("(L-erg) fails for this model; the sample need not represent a unique invariant measure");
    }
    let st = Stepper::new(model, cfg)?;
    let burn = step_index(burn_in, cfg.dt);
    let thin = step_index(thinning, cfg.dt).max(1);
    let total = burn + thin * n_samples;
    let mut rng = trajectory_rng(cfg.seed, 0);
    let mut inc = st.new_increments();
    let mut w = st.workspace();
    let mut x = x0.vector().clone();
    let mut jump_counts = vec![0u64; st.n_jump()];
    let mut sampled_jumps = vec![0u64; st.n_jump()];
    let mut degenerate_jumps = 0;
    let mut atoms = Vec::with_capacity(n_samples);
    let mut times = Vec::with_capacity(n_samples);
    for step in 1..=total {
        st.draw(&mut rng, &mut inc);
        match st.sse_step(&mut x, &inc, &mut w)? {
            StepEvent::Jump(j) => {
                jump_counts[j] += 1;
                if step > burn {
                    sampled_jumps[j] += 1;
                }
            }
            StepEvent::DegenerateJump(_) => degenerate_jumps += 1,
            StepEvent::Diffusive => {}
        }
        if step > burn && (step - burn) % thin == 0 {
            atoms.push(ProjectivePoint::new(x.clone())?);
            times.push(step as f64 * cfg.dt);
        }
    }
    Ok(InvariantSample {
        measure: EmpiricalMeasure::uniform(atoms)?,
        times,
        jump_counts,
        sampled_jumps,
        degenerate_jumps,
        erg_holds,
    })
}

/// `(C, λ)` of `value ≈ C e^{−λt}` with goodness of fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateFit {
    pub c: f64,
    pub lambda: f64,
    pub r2: f64,
    pub lambda_stderr: f64,
    pub decaying: bool,
    /// First grid index of the fit window.
    pub window_start: usize,
}

/// Weighted least squares of `ln value` against `t` on the last half of the grid.
///
/// Weights are `(value/stderr)²` when every stderr in the window is positive, uniform
/// otherwise.
pub fn fit_rate(t: &[f64], values: &[f64], stderrs: Option<&[f64]>) -> Result<RateFit> {
    let n = t.len();
    if n != values.len() || stderrs.is_some_and(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.len(),
        });
    }
    if n < 2 {
        return Err(Error::Config("rate fit needs at least two points".into()));
    }
    let start = (n / 2).min(n - 2);
    let ts = &t[start..];
    let vs = &values[start..];
    if vs.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Config("rate fit needs positive values on the fit window".into()));
    }
    let y: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let mut w = vec![1.0; ts.len()];
    if let Some(se) = stderrs {
        let rel: Vec<f64> = se[start..].iter().zip(vs).map(|(s, v)| s / v).collect();
        if rel.iter().all(|r| *r > 0.0 && r.is_finite()) {
            w = rel.iter().map(|r| 1.0 / (r * r)).collect();
        }
    }
    let sw: f64 = w.iter().sum();
    let tm = w.iter().zip(ts).map(|(w, t)| w * t).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(ts).map(|(w, t)| w * (t - tm) * (t - tm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Config("rate fit needs distinct times".into()));
    }
    let sxy: f64 = (0..ts.len()).map(|i| w[i] * (ts[i] - tm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let icpt = ym - slope * tm;
    let ss_res: f64 = (0..ts.len())
        .map(|i| w[i] * (y[i] - icpt - slope * ts[i]).powi(2))
        .sum();
    let ss_tot: f64 = (0..ts.len()).map(|i| w[i] * (y[i] - ym).powi(2)).sum();
    let r2 = if ss_tot > 1e-300 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let dof = ts.len() as f64 - 2.0;
    let lambda_stderr = if dof > 0.0 { (ss_res / dof / sxx).sqrt() } else { 0.0 };
    let lambda = -slope;
    Ok(RateFit {
        c: icpt.exp(),
        lambda,
        r2,
        lambda_stderr,
        decaying: lambda > 1e-9 && lambda > 2.0 * lambda_stderr,
        window_start: start,
    })
}

/// W₁ between two simulated ensembles on a time grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixingCurve {
    pub curve: Curve,
    pub fit: Option<RateFit>,
    /// W₁ from ensemble `a` to the reference measure, when one was given.
    pub to_reference: Option<Vec<f64>>,
}

/// Evolve `n_samples` SSE paths from each of two initial laws and compute W₁ between the two
/// empirical laws at every grid time. Ensemble `a` uses RNG streams `0..n`, ensemble `b` uses
/// `n..2n`. The stderr column is zero; W₁ is reported as a point estimate.
pub fn two_ensemble_w1<FA, FB>(
    model: &OperatorModel,
    sampler_a: FA,
    sampler_b: FB,
    t_grid: &[f64],
    n_samples: usize,
    cfg: &SimConfig,
    reference: Option<&EmpiricalMeasure>,
) -> Result<MixingCurve>
where
    FA: Fn(&mut ChaCha8Rng) -> ProjectivePoint + Sync,
    FB: Fn(&mut ChaCha8Rng) -> ProjectivePoint + Sync,
{
    if n_samples == 0 || t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("need samples and a nondecreasing time grid".into()));
    }
    let st = Stepper::new(model, cfg)?;
    let steps: Vec<usize> = t_grid.iter().map(|&t| step_index(t, cfg.dt)).collect();
    let run = |x0: ProjectivePoint, rng: &mut ChaCha8Rng| -> Result<Vec<ProjectivePoint>> {
        let mut inc = st.new_increments();
        let mut w = st.workspace();
        let mut x = x0.vector().clone();
        let mut out = Vec::with_capacity(steps.len());
        let mut done = 0;
        for &target in &steps {
            while done < target {
                st.draw(rng, &mut inc);
                st.sse_step(&mut x, &inc, &mut w)?;
                done += 1;
            }
            out.push(ProjectivePoint::new(x.clone())?);
        }
        Ok(out)
    };
    let paths_a: Vec<Vec<ProjectivePoint>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            let x0 = sampler_a(&mut rng);
            run(x0, &mut rng)
        })
        .collect::<Result<_>>()?;
    let paths_b: Vec<Vec<ProjectivePoint>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, (n_samples + i) as u64);
            let x0 = sampler_b(&mut rng);
            run(x0, &mut rng)
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, Option<f64>)> = (0..steps.len())
        .into_par_iter()
        .map(|g| {
            let a = EmpiricalMeasure::uniform(paths_a.iter().map(|p| p[g].clone()).collect())?;
            let b = EmpiricalMeasure::uniform(paths_b.iter().map(|p| p[g].clone()).collect())?;
            let r = reference.map(|r| wasserstein1(&a, r)).transpose()?;
            Ok((wasserstein1(&a, &b)?, r))
        })
        .collect::<Result<_>>()?;
    let (values, refs): (Vec<f64>, Vec<Option<f64>>) = pairs.into_iter().unzip();
    let to_reference = reference.map(|_| refs.into_iter().map(|r| r.unwrap_or(f64::NAN)).collect());
    let curve = Curve {
        t: t_grid.to_vec(),
        value: values,
        stderr: vec![0.0; t_grid.len()],
    };
    let fit = fit_rate(&curve.t, &curve.value, None).ok();
    Ok(MixingCurve {
        curve,
        fit,
        to_reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// All permutations of `0..n` by Heap's algorithm.
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        let mut a: Vec<usize> = (0..n).collect();
        let mut out = vec![a.clone()];
        let mut c = vec![0; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    a.swap(0, i);
                } else {
                    a.swap(c[i], i);
                }
                out.push(a.clone());
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        out
    }

    fn random_point(rng: &mut ChaCha8Rng, k: usize) -> ProjectivePoint {
        let v: Vec<_> = (0..k)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        ProjectivePoint::from_slice(&v).unwrap()
    }

    #[test]
    fn dirac_distances() {
        let x = ProjectivePoint::from_real(&[1.0, 0.0]).unwrap();
        let y = ProjectivePoint::from_real(&[0.6, 0.8]).unwrap();
        let dx = EmpiricalMeasure::dirac(x.clone());
        let dy = EmpiricalMeasure::dirac(y.clone());
        assert_eq!(wasserstein1(&dx, &dx).unwrap(), 0.0);
        assert_relative_eq!(wasserstein1(&dx, &dy).unwrap(), 0.8, max_relative = 1e-14);
    }

    #[test]
    fn uniform_matches_permutation_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            for _ in 0..10 {
                let a: Vec<_> = (0..n).map(|_| random_point(&mut rng, 3)).collect();
                let b: Vec<_> = (0..n).map(|_| random_point(&mut rng, 3)).collect();
                let best = permutations(n)
                    .iter()
                    .map(|p| (0..n).map(|i| fs_distance_vectors(a[i].vector(), b[p[i]].vector())).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
                    / n as f64;
                let mu = EmpiricalMeasure::uniform(a).unwrap();
                let nu = EmpiricalMeasure::uniform(b).unwrap();
                assert!((wasserstein1(&mu, &nu).unwrap() - best).abs() <= 1e-9);
            }
        }
    }

    /// 3×3 plans with weights on a grid: enumerate the two free entries of every plan whose
    /// marginals match, at resolution 1/60.
    #[test]
    fn three_atom_weighted_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<_> = (0..3).map(|_| random_point(&mut rng, 2)).collect();
        let b: Vec<_> = (0..3).map(|_| random_point(&mut rng, 2)).collect();
        let wa = [20.0, 25.0, 15.0];
        let wb = [10.0, 30.0, 20.0];
        let cost = |i: usize, j: usize| fs_distance_vectors(a[i].vector(), b[j].vector());
        let mut best = f64::INFINITY;
        for p00 in 0..=20 {
            for p01 in 0..=(20 - p00) {
                let p02 = 20 - p00 - p01;
                for p10 in 0..=25 {
                    for p11 in 0..=(25 - p10) {
                        let p12 = 25 - p10 - p11;
                        let p20 = wb[0] as i32 - p00 - p10;
                        let p21 = wb[1] as i32 - p01 - p11;
                        let p22 = wb[2] as i32 - p02 - p12;
                        if p20 < 0 || p21 < 0 || p22 < 0 || p20 + p21 + p22 != 15 {
                            continue;
                        }
                        let plan = [[p00, p01, p02], [p10, p11, p12], [p20, p21, p22]];
                        let total: f64 = (0..3)
                            .flat_map(|i| (0..3).map(move |j| (i, j)))
                            .map(|(i, j)| plan[i][j] as f64 * cost(i, j))
                            .sum();
                        best = best.min(total / 60.0);
                    }
                }
            }
        }
        let mu = EmpiricalMeasure::new(a.clone(), wa.iter().map(|w| w / 60.0).collect()).unwrap();
        let nu = EmpiricalMeasure::new(b.clone(), wb.iter().map(|w| w / 60.0).collect()).unwrap();
        assert!((wasserstein1(&mu, &nu).unwrap() - best).abs() < 1e-9);
    }

    #[test]
    fn budget_is_enforced() {
        let big = vec![0.0; 4000];
        let err = circle_w1_angles(&big, &big).unwrap_err();
        assert!(matches!(err, Error::TransportBudget { .. }));
    }

    #[test]
    fn rejects_bad_weights() {
        let x = ProjectivePoint::basis(2, 0);
        assert!(EmpiricalMeasure::new(vec![x.clone()], vec![0.9]).is_err());
        assert!(EmpiricalMeasure::new(vec![x.clone(), x], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn angle_examples() {
        assert_eq!(qubit_angle(&ProjectivePoint::basis(2, 0)).unwrap(), 0.0);
        let p = ProjectivePoint::from_real(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(qubit_angle(&p).unwrap(), PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(qubit_angle(&ProjectivePoint::basis(2, 1)).unwrap(), PI);
        let off = ProjectivePoint::from_slice(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert!(matches!(qubit_angle(&off), Err(Error::OffCircle(_))));
        assert!(qubit_angle(&ProjectivePoint::basis(3, 0)).is_err());
    }

    #[test]
    fn circle_point_masses() {
        assert_relative_eq!(circle_w1_angles(&[0.0], &[PI]).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(circle_w1_angles(&[0.3, 1.0], &[1.0, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn circle_w1_of_own_discretization() {
        for fam in [AngleFamily::Qnd { gamma: 1.0 }, AngleFamily::ThermalDiffusive { a: 2.0, b: 1.0 }] {
            let d = AngleDensity::new(fam).unwrap();
            let m = 200;
            let atoms = d.quantile_atoms(m).unwrap();
            assert!(circle_w1(&atoms, &d, m).unwrap() <= PI / m as f64);
        }
    }

    #[test]
    fn uniform_samples_against_uniform_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 2000;
        let m = 400;
        let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let atoms: Vec<f64> = (0..m).map(|i| -PI + (i as f64 + 0.5) * 2.0 * PI / m as f64).collect();
        let w = circle_w1_angles(&samples, &atoms).unwrap();
        assert!(w <= 2.0 / (n as f64).sqrt() + PI / m as f64, "{w}");
    }

    #[test]
    fn fit_exact_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = t.iter().map(|t| 2.0 * (-0.5 * t).exp()).collect();
        let f = fit_rate(&t, &v, None).unwrap();
        assert!((f.c - 2.0).abs() < 1e-10 && (f.lambda - 0.5).abs() < 1e-10);
        assert!((f.r2 - 1.0).abs() < 1e-12 && f.decaying);
    }

    #[test]
    fn fit_noisy_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|t| 3.0 * (-0.8 * t).exp() * (1.0 + rng.sample(normal)))
            .collect();
        let se: Vec<f64> = v.iter().map(|v| 0.01 * v).collect();
        let f = fit_rate(&t, &v, Some(&se)).unwrap();
        assert!((f.lambda - 0.8).abs() < 0.05 * 0.8, "{f:?}");
    }

    #[test]
    fn fit_constant_is_not_decaying() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let f = fit_rate(&t, &[0.7; 5], None).unwrap();
        assert!(f.lambda.abs() < 1e-12 && !f.decaying);
        assert!(fit_rate(&t, &[1.0, 1.0, 1.0, 0.0, 1.0], None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn iota_round_trip(theta in -PI..PI) {
            let th = if theta == -PI { PI } else { theta };
            prop_assert!((qubit_angle(&iota(th)).unwrap() - th).abs() <= 1e-12);
        }

        #[test]
        fn triangle_and_symmetry(seed in any::<u64>(), n in 1usize..6, m in 1usize..6, l in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |size: usize| {
                let atoms: Vec<_> = (0..size).map(|_| random_point(&mut rng, 3)).collect();
                let raw: Vec<f64> = (0..size).map(|_| rng.random::<f64>() + 0.05).collect();
                let s: f64 = raw.iter().sum();
                EmpiricalMeasure::new(atoms, raw.iter().map(|w| w / s).collect()).unwrap()
            };
            let (a, b, cc) = (draw(n), draw(m), draw(l));
            let ab = wasserstein1(&a, &b).unwrap();
            let ba = wasserstein1(&b, &a).unwrap();
            let bc = wasserstein1(&b, &cc).unwrap();
            let ac = wasserstein1(&a, &cc).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-8);
            prop_assert!(ac <= ab + bc + 1e-8);
            prop_assert!(wasserstein1(&a, &a).unwrap() <= 1e-8);
        }
    }
}
