//! Ensemble statistics built on the steppers: mean states, `f(t)`, the maximum-likelihood
//! coupling, and likelihood matrices.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{likelihood_matrix, ml_estimate, trajectory_rng, MeasureMode, PropagatorState, SimConfig, Stepper};
use crate::error::{Error, Result};
use crate::lindblad::OperatorModel;
use crate::measure::{fit_rate, RateFit};
use crate::operator::{
    c, fs_distance, make_projector, wedge_norm_matrix, CMatrix, ComplexOperator, DensityMatrix,
    ProjectivePoint,
};
use crate::stats::{log_mean_exp_stderr, mean_stderr, median, Curve};

/// Nearest step index of time `t`.
pub fn step_index(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

fn grid_steps(t_grid: &[f64], dt: f64) -> Result<Vec<usize>> {
    if t_grid.is_empty() {
        return Err(Error::Config("empty time grid".into()));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::Config("time grid must be finite and nonnegative".into()));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("time grid must be nondecreasing".into()));
    }
    Ok(t_grid.iter().map(|&t| step_index(t, dt)).collect())
}

/// Entrywise mean of a family of matrices with standard errors of real and imaginary parts.
#[derive(Clone, Debug)]
pub struct EnsembleMean {
    pub mean: CMatrix,
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
    pub samples: usize,
}

impl EnsembleMean {
    pub fn from_samples(samples: &[CMatrix]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Config("no samples".into()))?;
        let (r, cdim) = first.shape();
        let mut mean = CMatrix::zeros(r, cdim);
        let mut stderr_re = DMatrix::zeros(r, cdim);
        let mut stderr_im = DMatrix::zeros(r, cdim);
        for i in 0..r {
            for j in 0..cdim {
                let re: Vec<f64> = samples.iter().map(|m| m[(i, j)].re).collect();
                let im: Vec<f64> = samples.iter().map(|m| m[(i, j)].im).collect();
                let (mr, sr) = mean_stderr(&re);
                let (mi, si) = mean_stderr(&im);
                mean[(i, j)] = c(mr, mi);
                stderr_re[(i, j)] = sr;
                stderr_im[(i, j)] = si;
            }
        }
        Ok(Self {
            mean,
            stderr_re,
            stderr_im,
            samples: samples.len(),
        })
    }

    /// `½‖mean − target‖₁`
    pub fn trace_distance(&self, target: &CMatrix) -> f64 {
        0.5 * ComplexOperator::from_matrix_unchecked(&self.mean - target).trace_norm()
    }

    /// Largest entrywise deviation from `target` in units of the standard error.
    pub fn max_z_score(&self, target: &CMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.mean.nrows() {
            for j in 0..self.mean.ncols() {
                let d = self.mean[(i, j)] - target[(i, j)];
                for (dev, se) in [(d.re, self.stderr_re[(i, j)]), (d.im, self.stderr_im[(i, j)])] {
                    let z = if se > 0.0 {
                        dev.abs() / se
                    } else if dev.abs() < 1e-12 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }
}

/// Mean of `π_{x̂_T}` over `n_traj` SSE paths from `x0`, at `T = cfg.horizon`.
pub fn ensemble_projector_mean(
    model: &OperatorModel,
    x0: &ProjectivePoint,
    cfg: &SimConfig,
    n_traj: usize,
) -> Result<EnsembleMean> {
    let st = Stepper::new(model, cfg)?;
    let steps = cfg.steps();
    let finals: Vec<CMatrix> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            let mut inc = st.new_increments();
            let mut w = st.workspace();
            let mut x = x0.vector().clone();
            for _ in 0..steps {
                st.draw(&mut rng, &mut inc);
                st.sse_step(&mut x, &inc, &mut w)?;
            }
            Ok(&x * x.adjoint())
        })
        .collect::<Result<_>>()?;
    EnsembleMean::from_samples(&finals)
}

/// Monte Carlo estimate of `f(t) = E‖∧²S_t‖` under the reference measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FCurve {
    pub curve: Curve,
    pub relative_stderr: Vec<f64>,
    pub fit: RateFit,
    pub samples: usize,
}

pub fn estimate_f(model: &OperatorModel, t_grid: &[f64], n_samples: usize, cfg: &SimConfig) -> Result<FCurve> {
    if model.dim() < 2 {
        return Err(Error::Degenerate("f(t) needs dimension >= 2"));
    }
    if n_samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let st = Stepper::new(model, cfg)?;
    let steps = grid_steps(t_grid, cfg.dt)?;
    let weight = DensityMatrix::maximally_mixed(model.dim());
    let logs: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            let mut inc = st.new_increments();
            let mut p = PropagatorState::new(model, weight.clone())?.with_wedge_tracking();
            let mut out = Vec::with_capacity(steps.len());
            let mut done = 0;
            for &target in &steps {
                while done < target {
                    st.draw(&mut rng, &mut inc);
                    st.propagator_step(&mut p, &inc, &MeasureMode::Reference)?;
                    done += 1;
                }
                out.push(p.log_wedge_norm()?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut curve = Curve::default();
    let mut relative_stderr = Vec::with_capacity(steps.len());
    for (g, &t) in t_grid.iter().enumerate() {
        let column: Vec<f64> = logs.iter().map(|row| row[g]).collect();
        let (lme, rel) = log_mean_exp_stderr(&column);
        let value = lme.exp();
        curve.t.push(t);
        curve.value.push(value);
        curve.stderr.push(value * rel);
        relative_stderr.push(rel);
    }
    let fit = fit_rate(&curve.t, &curve.value, Some(&curve.stderr))?;
    Ok(FCurve {
        curve,
        relative_stderr,
        fit,
        samples: n_samples,
    })
}

/// Distances between the physical trajectory and the maximum-likelihood estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingCurve {
    pub curve: Curve,
    pub median: Vec<f64>,
    /// `d[sample][grid]`
    pub d: Vec<Vec<f64>>,
    /// `‖∧²S_t‖ / ‖S_t x_0‖²`, same layout as `d`.
    pub bound: Vec<Vec<f64>>,
    pub violations: usize,
}

/// Slack for the pathwise bound, which holds with equality up to rounding in some cases.
const BOUND_SLACK: f64 = 1e-10;

pub fn coupling_distance<F>(
    model: &OperatorModel,
    sampler: F,
    t_grid: &[f64],
    n_samples: usize,
    cfg: &SimConfig,
) -> Result<CouplingCurve>
where
    F: Fn(&mut ChaCha8Rng) -> ProjectivePoint + Sync,
{
    if model.dim() < 2 {
        return Err(Error::Degenerate("coupling needs dimension >= 2"));
    }
    let st = Stepper::new(model, cfg)?;
    let steps = grid_steps(t_grid, cfg.dt)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            let x0 = sampler(&mut rng);
            let mut inc = st.new_increments();
            let mut p = PropagatorState::new(model, make_projector(&x0))?;
            let mut d = Vec::with_capacity(steps.len());
            let mut bound = Vec::with_capacity(steps.len());
            let mut done = 0;
            for &target in &steps {
                while done < target {
                    st.draw(&mut rng, &mut inc);
                    st.propagator_step(&mut p, &inc, &MeasureMode::Physical)?;
                    done += 1;
                }
                let sx = p.s() * x0.vector();
                let x = ProjectivePoint::new(sx.clone())?;
                let (_, y) = ml_estimate(&p)?;
                d.push(fs_distance(&x, &y));
                bound.push(wedge_norm_matrix(p.s())? / sx.norm_squared());
            }
            Ok((d, bound))
        })
        .collect::<Result<_>>()?;

    let (d, bound): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    let violations = d
        .iter()
        .zip(&bound)
        .map(|(dr, br)| dr.iter().zip(br).filter(|(x, b)| **x > **b + BOUND_SLACK).count())
        .sum();
    let mut curve = Curve::default();
    let mut med = Vec::with_capacity(t_grid.len());
    for (g, &t) in t_grid.iter().enumerate() {
        let column: Vec<f64> = d.iter().map(|row| row[g]).collect();
        let (m, se) = mean_stderr(&column);
        curve.t.push(t);
        curve.value.push(m);
        curve.stderr.push(se);
        med.push(median(&column));
    }
    Ok(CouplingCurve {
        curve,
        median: med,
        d,
        bound,
        violations,
    })
}

/// Likelihood matrices `M_t` under the physical law started from `Id/k`.
/// Layout `[grid][sample]`.
pub fn likelihood_ensemble(
    model: &OperatorModel,
    t_grid: &[f64],
    n_samples: usize,
    cfg: &SimConfig,
) -> Result<Vec<Vec<DensityMatrix>>> {
    let st = Stepper::new(model, cfg)?;
    let steps = grid_steps(t_grid, cfg.dt)?;
    let weight = DensityMatrix::maximally_mixed(model.dim());
    let rows: Vec<Vec<DensityMatrix>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            let mut inc = st.new_increments();
            let mut p = PropagatorState::new(model, weight.clone())?;
            let mut out = Vec::with_capacity(steps.len());
            let mut done = 0;
            for &target in &steps {
                while done < target {
                    st.draw(&mut rng, &mut inc);
                    st.propagator_step(&mut p, &inc, &MeasureMode::Physical)?;
                    done += 1;
                }
                out.push(likelihood_matrix(&p)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..steps.len())
        .map(|g| rows.iter().map(|r| r[g].clone()).collect())
        .collect())
}
