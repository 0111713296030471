//! The purification hypothesis: certification, numerical falsification, and the
//! dynamical diagnostic `E[1 − λ_max(M_t)]`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lindblad::OperatorModel;
use crate::operator::{c, CMatrix, CVector, ComplexOperator, DensityMatrix, HermitianOperator};
use crate::stats::{mean_stderr, Curve};
use crate::trajectory::{likelihood_matrix, step_index, trajectory_rng, MeasureMode, PropagatorState, SimConfig, Stepper};

/// Search minima below this are treated as exact zeros.
pub const ZERO_RESIDUAL: f64 = 1e-12;
/// Numerical "holds" verdicts with a residual below this carry a warning.
pub const RESIDUAL_FLOOR: f64 = 1e-6;
/// Bound on `‖πAπ − λ_A π‖` for an accepted witness.
pub const WITNESS_TOL: f64 = 1e-8;
pub const RESTARTS: usize = 200;
const SEARCH_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const LM_ITERS: usize = 400;
const FD_STEP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurVerdict {
    HoldsCertified,
    HoldsNumerical,
    Fails,
}

impl PurVerdict {
    pub fn holds(&self) -> bool {
        !matches!(self, PurVerdict::Fails)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PurReport {
    pub verdict: PurVerdict,
    /// Projector of rank ≥ 2 on which every observable compresses to a scalar.
    pub witness: Option<ComplexOperator>,
    /// Smallest search objective found; zero on certified paths.
    pub residual: f64,
    pub method: String,
    pub warning: Option<String>,
}

/// `{L_i + L_i*} ∪ {C_j* C_j}`, in channel order.
pub fn observable_set(model: &OperatorModel) -> Vec<HermitianOperator> {
    let diff = model
        .diffusive()
        .iter()
        .map(|l| HermitianOperator::hermitian_part(&(l + &l.adjoint())));
    let jump = model
        .jump()
        .iter()
        .map(|cj| HermitianOperator::hermitian_part(&(&cj.adjoint() * cj)));
    diff.chain(jump).collect()
}

/// `max_A ‖πAπ − λ_A π‖_F` with `λ_A = tr(πAπ)/rank π`.
pub fn witness_defect(observables: &[HermitianOperator], pi: &CMatrix) -> f64 {
    let rank = pi.trace().re.round().max(1.0);
    observables
        .iter()
        .map(|a| {
            let comp = pi * a.matrix() * pi;
            let lambda = comp.trace() / rank;
            (comp - pi * lambda).norm()
        })
        .fold(0.0, f64::max)
}

fn projector_onto(cols: &[CVector]) -> CMatrix {
    let k = cols[0].len();
    cols.iter().fold(CMatrix::zeros(k, k), |acc, v| acc + v * v.adjoint())
}

fn report(verdict: PurVerdict, witness: Option<CMatrix>, residual: f64, method: &str) -> PurReport {
    PurReport {
        verdict,
        witness: witness.map(|w| ComplexOperator::new(w).expect("finite projector")),
        residual,
        method: method.into(),
        warning: None,
    }
}

/// Joint eigenspaces of commuting Hermitian matrices, by successive refinement.
fn joint_eigenspaces(obs: &[HermitianOperator], k: usize) -> Vec<Vec<CVector>> {
    let mut blocks: Vec<Vec<CVector>> = vec![(0..k).map(|i| CVector::from_fn(k, |r, _| c(f64::from(u8::from(r == i)), 0.0))).collect()];
    for a in obs {
        let tol = 1e-9 * a.as_operator().op_norm().max(1e-300);
        let mut next = Vec::new();
        for block in blocks {
            let d = block.len();
            let v = CMatrix::from_columns(&block);
            let comp = v.adjoint() * a.matrix() * &v;
            let h = HermitianOperator::hermitian_part(&ComplexOperator::new(comp).expect("finite"));
            let (vals, vecs) = h.eigh();
            let mut start = 0;
            for i in 1..=d {
                if i == d || vals[i] - vals[i - 1] > tol {
                    next.push((start..i).map(|c| &v * vecs.column(c)).collect());
                    start = i;
                }
            }
        }
        blocks = next;
    }
    blocks
}

/// Commuting observables share an eigenbasis `b_1..b_k` with joint eigenvalue tuples `v_i`.
/// A scalar compression onto `span{x, y}` exists iff the vectors `(v_i, 1)` are linearly
/// dependent: splitting a null combination into its positive and negative parts gives
/// orthonormal `x`, `y` with disjoint supports and equal compressions, and linear
/// independence forces `x = y = 0`.
fn certify_commuting(obs: &[HermitianOperator], raw: &[HermitianOperator], k: usize) -> PurReport {
    const METHOD: &str = "joint eigenvalue tuples";
    let blocks = joint_eigenspaces(obs, k);
    if let Some(b) = blocks.iter().find(|b| b.len() >= 2) {
        return report(PurVerdict::Fails, Some(projector_onto(&b[..2])), 0.0, METHOD);
    }
    let basis: Vec<CVector> = blocks.into_iter().map(|mut b| b.remove(0)).collect();
    let m = obs.len();
    // zero rows pad the system so the SVD returns a full right basis
    let rows = (m + 1).max(k);
    let w = DMatrix::from_fn(rows, k, |r, i| match r {
        r if r < m => obs[r].expectation(&basis[i]),
        r if r == m => 1.0,
        _ => 0.0,
    });
    let svd = w.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested");
    let smallest = (0..k)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .expect("k >= 2");
    let scale = svd.singular_values.max().max(1.0);
    let null = (svd.singular_values[smallest] <= 1e-9 * scale).then(|| vt.row(smallest).transpose());
    let Some(cvec) = null else {
        return report(PurVerdict::HoldsCertified, None, 0.0, METHOD);
    };
    let pos: f64 = cvec.iter().filter(|x| **x > 0.0).sum();
    let neg: f64 = -cvec.iter().filter(|x| **x < 0.0).sum::<f64>();
    let mut x = CVector::zeros(k);
    let mut y = CVector::zeros(k);
    for i in 0..k {
        if cvec[i] > 0.0 {
            x += &basis[i] * c((cvec[i] / pos).sqrt(), 0.0);
        } else if cvec[i] < 0.0 {
            y += &basis[i] * c((-cvec[i] / neg).sqrt(), 0.0);
        }
    }
    let pi = projector_onto(&[x, y]);
    let defect = witness_defect(raw, &pi);
    if defect > WITNESS_TOL {
        warn!("affine dependence found but the witness defect is {defect:e}");
    }
    report(PurVerdict::Fails, Some(pi), 0.0, METHOD)
}

/// Decide (Pur) for `model`.
///
/// Certified when `k ≤ 2` or all observables commute; otherwise a multistart
/// Levenberg–Marquardt search over orthonormal pairs either finds a verified witness or
/// reports the smallest residual.
pub fn check_pur(model: &OperatorModel) -> PurReport {
    let k = model.dim();
    if k == 1 {
        return report(PurVerdict::HoldsCertified, None, 0.0, "dimension one");
    }
    let raw = observable_set(model);
    let obs: Vec<HermitianOperator> = raw
        .iter()
        .filter_map(|a| {
            let n = a.as_operator().op_norm();
            (n > 0.0).then(|| HermitianOperator::hermitian_part(&a.as_operator().scale(c(1.0 / n, 0.0))))
        })
        .collect();
    let e = |i: usize| CVector::from_fn(k, |r, _| c(f64::from(u8::from(r == i)), 0.0));

    if obs.is_empty() {
        return report(PurVerdict::Fails, Some(projector_onto(&[e(0), e(1)])), 0.0, "no measured observables");
    }

    if k == 2 {
        let scalar = obs.iter().all(|a| {
            let m = a.matrix();
            (m[(0, 1)].norm() + (m[(0, 0)] - m[(1, 1)]).norm()) <= 1e-12
        });
        return if scalar {
            report(PurVerdict::Fails, Some(CMatrix::identity(2, 2)), 0.0, "qubit certification")
        } else {
            report(PurVerdict::HoldsCertified, None, 0.0, "qubit certification")
        };
    }

    let commuting = obs.iter().enumerate().all(|(i, a)| {
        obs[i + 1..]
            .iter()
            .all(|b| a.as_operator().commutator(b.as_operator()).frobenius_norm() <= 1e-12)
    });
    if commuting {
        return certify_commuting(&obs, &raw, k);
    }

    let runs: Vec<(f64, CVector, CVector)> = (0..RESTARTS)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED);
            rng.set_stream(i as u64);
            let theta: Vec<f64> = (0..4 * k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (f, theta) = levenberg_marquardt(&obs, k, DVector::from_vec(theta));
            let (x, y) = frame(&theta, k);
            (f, x, y)
        })
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.0 < runs[best].0 {
            best = i;
        }
    }
    let (residual, x, y) = &runs[best];
    if *residual < ZERO_RESIDUAL {
        let pi = projector_onto(&[x.clone(), y.clone()]);
        if witness_defect(&raw, &pi) <= WITNESS_TOL {
            return report(PurVerdict::Fails, Some(pi), *residual, "numerical search");
        }
        warn!("search residual {residual:e} but the witness failed verification");
    }
    let mut out = report(PurVerdict::HoldsNumerical, None, *residual, "numerical search");
    if *residual < RESIDUAL_FLOOR {
        out.warning = Some(format!(
            "search residual {residual:e} is below the {RESIDUAL_FLOOR:e} floor; the verdict is doubtful"
        ));
    }
    out
}

/// Orthonormal pair from `4k` real parameters by Gram–Schmidt.
fn frame(theta: &DVector<f64>, k: usize) -> (CVector, CVector) {
    let p = CVector::from_fn(k, |i, _| c(theta[2 * i], theta[2 * i + 1]));
    let q = CVector::from_fn(k, |i, _| c(theta[2 * k + 2 * i], theta[2 * k + 2 * i + 1]));
    let x = &p / c(p.norm().max(1e-300), 0.0);
    let q = &q - &x * x.dotc(&q);
    let y = &q / c(q.norm().max(1e-300), 0.0);
    (x, y)
}

/// `[Re⟨x,Ay⟩, Im⟨x,Ay⟩, ⟨x,Ax⟩ − ⟨y,Ay⟩]` per observable.
fn residuals(obs: &[HermitianOperator], k: usize, theta: &DVector<f64>) -> DVector<f64> {
    let (x, y) = frame(theta, k);
    let mut r = DVector::zeros(3 * obs.len());
    for (n, a) in obs.iter().enumerate() {
        let ay = a.matrix() * &y;
        let xy = x.dotc(&ay);
        r[3 * n] = xy.re;
        r[3 * n + 1] = xy.im;
        r[3 * n + 2] = a.expectation(&x) - y.dotc(&ay).re;
    }
    r
}

fn levenberg_marquardt(obs: &[HermitianOperator], k: usize, mut theta: DVector<f64>) -> (f64, DVector<f64>) {
    let n = theta.len();
    let mut r = residuals(obs, k, &theta);
    let mut f = r.norm_squared();
    let mut mu = 1e-3;
    for _ in 0..LM_ITERS {
        if f < 1e-30 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for p in 0..n {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[p] += FD_STEP;
            tm[p] -= FD_STEP;
            let d = (residuals(obs, k, &tp) - residuals(obs, k, &tm)) / (2.0 * FD_STEP);
            jac.set_column(p, &d);
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        while mu < 1e12 {
            let sys = &jtj + DMatrix::identity(n, n) * mu;
            let Some(ch) = sys.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let step = ch.solve(&(-&g));
            let cand = &theta + step;
            let rc = residuals(obs, k, &cand);
            let fc = rc.norm_squared();
            if fc < f {
                theta = cand;
                r = rc;
                f = fc;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (f, theta)
}

/// `E[1 − λ_max(M_t)]` under the law started from `Id/k`, on `n_points + 1` equally spaced
/// times in `[0, cfg.horizon]`.
///
/// Without channels `M_t = Id/k` for all time, so the constant `1 − 1/k` is returned without
/// simulating.
pub fn purification_diagnostic(model: &OperatorModel, cfg: &SimConfig, n_traj: usize, n_points: usize) -> Result<Curve> {
    cfg.validate()?;
    let k = model.dim();
    let n_points = n_points.max(1);
    let t: Vec<f64> = (0..=n_points).map(|i| cfg.horizon * i as f64 / n_points as f64).collect();
    if !model.has_noise() {
        let v = 1.0 - 1.0 / k as f64;
        return Ok(Curve {
            value: vec![v; t.len()],
            stderr: vec![0.0; t.len()],
            t,
        });
    }
    let st = Stepper::new(model, cfg)?;
    let steps: Vec<usize> = t.iter().map(|&x| step_index(x, cfg.dt)).collect();
    let weight = DensityMatrix::maximally_mixed(k);
    let rows: Vec<Vec<f64>> = (0..n_traj)
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
                let m = likelihood_matrix(&p)?;
                let top = m.eigenvalues().last().copied().unwrap_or(1.0);
                out.push((1.0 - top).max(0.0));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut curve = Curve::default();
    for (g, &tg) in t.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[g]).collect();
        let (m, se) = mean_stderr(&col);
        curve.t.push(tg);
        curve.value.push(m);
        curve.stderr.push(se);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::operator::c;
    use proptest::prelude::*;

    fn random_unitary(seed: u64, k: usize) -> ComplexOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(k, k, |_, _| {
            c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        ComplexOperator::new(m.qr().q()).unwrap()
    }

    #[test]
    fn qnd_observable_is_two_root_gamma_sigma_z() {
        let g: f64 = 2.5;
        let obs = observable_set(&gallery::qnd_model(g).unwrap().model);
        assert_eq!(obs.len(), 1);
        let m = obs[0].matrix();
        assert!((m[(0, 0)].re - 2.0 * g.sqrt()).abs() < 1e-14);
        assert!((m[(1, 1)].re + 2.0 * g.sqrt()).abs() < 1e-14);
        assert_eq!(m[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn thermal_jump_observables() {
        let obs = observable_set(&gallery::thermal_jump_model(2.0, 3.0).unwrap().model);
        let diag = |h: &HermitianOperator| (h.matrix()[(0, 0)].re, h.matrix()[(1, 1)].re);
        let d0 = diag(&obs[0]);
        assert!(d0.0 == 0.0 && (d0.1 - 2.0).abs() < 1e-14);
        assert!((diag(&obs[1]).0 - 3.0).abs() < 1e-14 && diag(&obs[1]).1 == 0.0);
    }

    #[test]
    fn gallery_verdicts() {
        for (name, _) in gallery::list() {
            let ex = gallery::named(name, &gallery::GalleryParams::default()).unwrap();
            let rep = check_pur(&ex.model);
            assert_eq!(rep.verdict, ex.expected.pur_verdict, "{name}: {rep:?}");
        }
    }

    #[test]
    fn counterexample_witness_is_dark_subspace() {
        let m = gallery::counterexample_model().unwrap().model;
        let rep = check_pur(&m);
        assert_eq!(rep.verdict, PurVerdict::Fails);
        let w = rep.witness.unwrap().into_matrix();
        assert!(witness_defect(&observable_set(&m), &w) <= WITNESS_TOL);
        let mut span23 = CMatrix::zeros(3, 3);
        span23[(1, 1)] = c(1.0, 0.0);
        span23[(2, 2)] = c(1.0, 0.0);
        assert!((w - span23).norm() < 1e-6);
    }

    #[test]
    fn unitary_only_fails_and_scalar_qubit_fails() {
        let m = OperatorModel::new(HermitianOperator::from_real_diagonal(&[1.0, 2.0, 3.0]), vec![], vec![]).unwrap();
        let rep = check_pur(&m);
        assert_eq!(rep.verdict, PurVerdict::Fails);
        let id = ComplexOperator::identity(2);
        let m = OperatorModel::new(HermitianOperator::zeros(2), vec![id], vec![]).unwrap();
        assert_eq!(check_pur(&m).verdict, PurVerdict::Fails);
    }

    #[test]
    fn degenerate_commuting_set_fails() {
        // C*C = diag(1, 1, 2): e1 and e2 are indistinguishable
        let cj = ComplexOperator::diagonal(&[c(1.0, 0.0), c(1.0, 0.0), c(2f64.sqrt(), 0.0)]);
        let m = OperatorModel::new(HermitianOperator::zeros(3), vec![], vec![cj]).unwrap();
        let rep = check_pur(&m);
        assert_eq!(rep.verdict, PurVerdict::Fails);
        assert_eq!(rep.method, "joint eigenvalue tuples");
    }

    /// One nondegenerate observable on three levels: `x ∈ span{e1, e3}` with `⟨x,Ax⟩ = λ2`
    /// pairs with `e2`.
    #[test]
    fn single_observable_on_three_levels_fails() {
        let cj = ComplexOperator::diagonal(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let m = OperatorModel::new(HermitianOperator::zeros(3), vec![], vec![cj]).unwrap();
        let rep = check_pur(&m);
        assert_eq!(rep.verdict, PurVerdict::Fails);
        let w = rep.witness.unwrap().into_matrix();
        assert!(witness_defect(&observable_set(&m), &w) <= WITNESS_TOL);
        assert!((w[(1, 1)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_three_level_holds_numerically() {
        let a = ComplexOperator::from_real(3, &[1.0, 0.3, 0.0, 0.0, -0.5, 0.7, 0.2, 0.0, 0.1]).unwrap();
        let b = ComplexOperator::from_row_slice(
            3,
            &[c(0.0, 0.0), c(0.0, 1.0), c(0.4, 0.0), c(0.0, 0.0), c(0.3, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -0.6), c(-1.0, 0.0)],
        )
        .unwrap();
        let m = OperatorModel::new(HermitianOperator::zeros(3), vec![a, b], vec![]).unwrap();
        let rep = check_pur(&m);
        assert_eq!(rep.verdict, PurVerdict::HoldsNumerical);
        assert!(rep.residual >= RESIDUAL_FLOOR, "{rep:?}");
    }

    #[test]
    fn verdict_invariant_under_conjugation() {
        for (name, _) in gallery::list() {
            let ex = gallery::named(name, &gallery::GalleryParams::default()).unwrap();
            let base = check_pur(&ex.model).verdict;
            for s in 0..10 {
                let u = random_unitary(100 + s, ex.model.dim());
                let m = ex.model.conjugated(&u).unwrap();
                assert_eq!(check_pur(&m).verdict, base, "{name} seed {s}");
            }
        }
    }

    #[test]
    fn diagnostic_without_channels_is_constant() {
        let m = OperatorModel::new(HermitianOperator::from_real_diagonal(&[0.0, 1.0, 5.0]), vec![], vec![]).unwrap();
        let cfg = SimConfig::new(0.01, 2.0, 1).unwrap();
        let curve = purification_diagnostic(&m, &cfg, 10, 20).unwrap();
        assert!(curve.value.iter().all(|v| v.to_bits() == (1.0f64 - 1.0 / 3.0).to_bits()));
    }

    #[test]
    fn diagnostic_starts_at_one_minus_one_over_k() {
        let m = gallery::qnd_model(1.0).unwrap().model;
        let cfg = SimConfig::new(0.01, 1.0, 3).unwrap();
        let curve = purification_diagnostic(&m, &cfg, 50, 4).unwrap();
        assert!((curve.value[0] - 0.5).abs() < 1e-12);
        assert!(curve.value[4] < curve.value[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// A planted two-dimensional subspace on which every observable is scalar is found.
        #[test]
        fn planted_witness_is_found(seed in any::<u64>()) {
            let u = random_unitary(seed, 3);
            let a = ComplexOperator::from_real(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -2.0]).unwrap();
            // A is Id on span{e1, e2}; L + L* = e1e3* + e3e1* vanishes there
            let l = ComplexOperator::from_real(3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
            let m = OperatorModel::new(HermitianOperator::zeros(3), vec![a, l], vec![]).unwrap();
            let m = m.conjugated(&u).unwrap();
            let rep = check_pur(&m);
            prop_assert_eq!(rep.verdict, PurVerdict::Fails);
            let w = rep.witness.unwrap().into_matrix();
            prop_assert!(witness_defect(&observable_set(&m), &w) <= WITNESS_TOL);
        }
    }
}
