//! Property and statistical checks across modules.

use proptest::prelude::*;
use qtraj::gallery;
use qtraj::lindblad::{evolve_master_raw, generator_spectrum, stationary_states, vectorized_generator};
use qtraj::measure::{sample_invariant, wasserstein1, EmpiricalMeasure};
use qtraj::operator::{c, fs_distance, make_projector, wedge_norm, CMatrix, C64};
use qtraj::stats::mean_stderr;
use qtraj::trajectory::{
    ensemble_projector_mean, run_sse, trajectory_rng, MeasureMode, PropagatorState, StepEvent, Stepper,
};
use qtraj::{
    check_l_erg, evolve_master, ComplexOperator, DensityMatrix, HermitianOperator, OperatorModel, ProjectivePoint,
    SimConfig,
};

fn cmatrix(k: usize, parts: &[f64]) -> CMatrix {
    CMatrix::from_fn(k, k, |i, j| c(parts[2 * (i * k + j)], parts[2 * (i * k + j) + 1]))
}

fn op(k: usize, parts: &[f64]) -> ComplexOperator {
    ComplexOperator::new(cmatrix(k, parts)).unwrap()
}

fn vector(parts: &[f64]) -> Vec<C64> {
    parts.chunks(2).map(|z| c(z[0], z[1])).collect()
}

fn point(parts: &[f64]) -> Option<ProjectivePoint> {
    ProjectivePoint::from_slice(&vector(parts)).ok()
}

fn dim_and_parts(n_mats: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..=4).prop_flat_map(move |k| (Just(k), prop::collection::vec(-1.0f64..1.0, 2 * k * k * n_mats)))
}

/// Random model from flat parts: H, one diffusive and one jump operator.
fn model_from(k: usize, parts: &[f64]) -> OperatorModel {
    let n = 2 * k * k;
    let h = HermitianOperator::hermitian_part(&op(k, &parts[..n]));
    let s = 1.0 / (k as f64).sqrt();
    let l = op(k, &parts[n..2 * n]).scale(c(s, 0.0));
    let cj = op(k, &parts[2 * n..3 * n]).scale(c(s, 0.0));
    OperatorModel::new(h, vec![l], vec![cj]).unwrap()
}

fn state_from(k: usize, parts: &[f64]) -> DensityMatrix {
    let b = cmatrix(k, parts);
    let m = &b * b.adjoint() + CMatrix::identity(k, k) * c(1e-3, 0.0);
    let tr = m.trace();
    DensityMatrix::from_operator(ComplexOperator::new(m / tr).unwrap()).unwrap()
}

/// `‖∧²A‖` from the explicit matrix of 2×2 minors, by power iteration on its Gram matrix.
fn wedge_oracle(a: &CMatrix) -> f64 {
    let k = a.nrows();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let w = CMatrix::from_fn(pairs.len(), pairs.len(), |r, s| {
        let ((i, j), (l, m)) = (pairs[r], pairs[s]);
        a[(i, l)] * a[(j, m)] - a[(i, m)] * a[(j, l)]
    });
    let g = w.adjoint() * &w;
    let mut v = qtraj::operator::CVector::from_element(pairs.len(), c(1.0, 0.0));
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let next = &g * &v;
        let n = next.norm();
        if n == 0.0 {
            return 0.0;
        }
        lambda = n / v.norm();
        v = next / c(n, 0.0);
    }
    lambda.sqrt()
}

/// `Σ |c_j| ‖V_j‖₁` over the nonzero modes in the expansion of `ρ - π` in eigenvectors of
/// the generator, with eigenvectors by inverse iteration. `None` when the eigenvector
/// matrix is too close to singular to resolve the expansion.
fn modal_prefactor(model: &OperatorModel, rho: &DensityMatrix, inv: &DensityMatrix) -> Option<f64> {
    let k = model.dim();
    let g = vectorized_generator(model);
    let spec = generator_spectrum(model).ok()?;
    let scale = 1.0 + g.norm();
    let n = k * k;
    let mut v = CMatrix::zeros(n, n);
    for (j, mu) in spec.iter().enumerate() {
        let shifted = &g - CMatrix::identity(n, n) * (mu + c(1e-10 * scale, 0.0));
        let lu = shifted.lu();
        let mut x = qtraj::operator::CVector::from_fn(n, |i, _| c(1.0 + 0.37 * i as f64, 0.11 * (i * i) as f64));
        for _ in 0..4 {
            x = lu.solve(&x)?;
            let nx = x.norm();
            x /= c(nx, 0.0);
        }
        v.set_column(j, &x);
    }
    let r = rho.matrix() - inv.matrix();
    let rv = qtraj::operator::CVector::from_fn(n, |i, _| r[(i % k, i / k)]);
    let coef = v.clone().lu().solve(&rv)?;
    if (&v * &coef - &rv).norm() > 1e-8 * (1.0 + coef.norm()) {
        return None;
    }
    let mut total = 0.0;
    for (j, mu) in spec.iter().enumerate() {
        if mu.norm() <= 1e-8 * scale {
            continue;
        }
        let vj = CMatrix::from_fn(k, k, |a, b| v[(a + k * b, j)]);
        total += coef[j].norm() * ComplexOperator::new(vj).unwrap().trace_norm();
    }
    Some(total)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn fs_distance_is_a_metric(parts in (2usize..=4).prop_flat_map(|k| prop::collection::vec(-1.0f64..1.0, 6 * k))) {
        let k = parts.len() / 6;
        let (Some(x), Some(y), Some(z)) =
            (point(&parts[..2 * k]), point(&parts[2 * k..4 * k]), point(&parts[4 * k..])) else {
            return Ok(());
        };
        let (xy, yz, xz) = (fs_distance(&x, &y), fs_distance(&y, &z), fs_distance(&x, &z));
        prop_assert!(fs_distance(&x, &x) <= 1e-9);
        prop_assert!((xy - fs_distance(&y, &x)).abs() <= 1e-9);
        prop_assert!(xz <= xy + yz + 1e-9);
        prop_assert!((0.0..=1.0).contains(&xy));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wedge_norm_bounds((k, parts) in dim_and_parts(2)) {
        let n = 2 * k * k;
        let (a, b) = (op(k, &parts[..n]), op(k, &parts[n..]));
        let wa = wedge_norm(&a).unwrap();
        let wb = wedge_norm(&b).unwrap();
        let wab = wedge_norm(&ComplexOperator::new(a.matrix() * b.matrix()).unwrap()).unwrap();
        prop_assert!((wa - wedge_oracle(a.matrix())).abs() <= 1e-9 * (1.0 + wa));
        prop_assert!(wa <= a.op_norm().powi(2) * (1.0 + 1e-12) + 1e-14);
        prop_assert!(wab <= wa * wb * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn projectors_are_idempotent(parts in (2usize..=6).prop_flat_map(|k| prop::collection::vec(-1.0f64..1.0, 2 * k))) {
        let Some(x) = point(&parts) else { return Ok(()) };
        let p = make_projector(&x);
        let m = p.matrix();
        prop_assert!((m * m - m).norm() <= 1e-12);
        prop_assert!((p.as_hermitian().trace() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn density_matrix_round_trips_entries((k, parts) in dim_and_parts(1)) {
        let b = cmatrix(k, &parts);
        let m = &b * b.adjoint() + CMatrix::identity(k, k) * c(1e-6, 0.0);
        let tr = m.trace();
        let m = m / tr;
        // exact Hermitian symmetry so that nothing needs repairing
        let m = CMatrix::from_fn(k, k, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)].conj() });
        let m = CMatrix::from_fn(k, k, |i, j| if i == j { c(m[(i, i)].re, 0.0) } else { m[(i, j)] });
        let Ok(d) = DensityMatrix::from_operator(ComplexOperator::new(m.clone()).unwrap()) else {
            // trace drifted past tolerance in the symmetrization: not a valid input
            return Ok(());
        };
        prop_assert_eq!(d.matrix(), &m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn master_equation_preserves_trace_and_positivity((k, parts) in dim_and_parts(4), t in 0.0f64..10.0) {
        let n = 2 * k * k;
        let model = model_from(k, &parts[..3 * n]);
        let rho = state_from(k, &parts[3 * n..]);
        let out = evolve_master_raw(&model, rho.as_hermitian(), t).unwrap();
        prop_assert!((out.trace() - 1.0).abs() <= 1e-9);
        prop_assert!(out.eigenvalues()[0] >= -1e-8);
    }

    #[test]
    fn ergodic_models_mix_at_the_reported_gap((k, parts) in dim_and_parts(4)) {
        let n = 2 * k * k;
        let model = model_from(k, &parts[..3 * n]);
        let report = check_l_erg(&model).unwrap();
        if !report.holds || report.spectral_gap <= 1e-3 {
            return Ok(());
        }
        let lambda = report.spectral_gap;
        let inv = report.stationary_state.unwrap();
        let rho = state_from(k, &parts[3 * n..]);
        let dist = |t: f64| {
            let out = evolve_master(&model, &rho, t).unwrap();
            ComplexOperator::new(out.matrix() - inv.matrix()).unwrap().trace_norm()
        };
        // C comes from the modal expansion ρ - π = Σ c_j V_j, which gives
        // dist(t) ≤ e^{-λt} Σ_{μ_j ≠ 0} |c_j| ‖V_j‖₁ exactly. A C fitted on a short window
        // is no bound: slow modes can start out masked, and near exceptional points the
        // prefactor is huge.
        let Some(c_modal) = modal_prefactor(&model, &rho, &inv) else { return Ok(()) };
        for i in 0..=40 {
            let t = 0.5 * i as f64 / lambda;
            let d = dist(t);
            prop_assert!(d <= c_modal * (-lambda * t).exp() * (1.0 + 1e-6) + 1e-10, "lambda t = {}: {} vs C = {}", lambda * t, d, c_modal);
        }
    }
}

#[test]
fn stationary_states_are_fixed_points() {
    for (name, _) in gallery::list() {
        let ex = gallery::named(name, &Default::default()).unwrap();
        for s in stationary_states(&ex.model).unwrap() {
            let out = evolve_master(&ex.model, &s, 1.0).unwrap();
            let d = ComplexOperator::new(out.matrix() - s.matrix()).unwrap().trace_norm();
            assert!(d <= 1e-8, "{name}: {d}");
        }
    }
}

/// `E_ref[Z_t g(ρ_t)]` against `E[g(ρ_t)]` from the physical stochastic master equation.
#[test]
fn reweighted_reference_paths_match_physical_paths() {
    let model = gallery::counterexample_model().unwrap().model;
    let rho0 = DensityMatrix::maximally_mixed(3);
    let conf = SimConfig::new(1e-3, 1.0, 17).unwrap();
    let st = Stepper::new(&model, &conf).unwrap();
    let a = CMatrix::from_diagonal(&qtraj::operator::CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]));
    let g = |rho: &CMatrix| (rho * &a).trace().re.powi(2);
    let n = 4000;

    let mut weighted = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = trajectory_rng(conf.seed, i as u64);
        let mut inc = st.new_increments();
        let mut p = PropagatorState::new(&model, rho0.clone()).unwrap();
        for _ in 0..conf.steps() {
            st.draw(&mut rng, &mut inc);
            st.propagator_step(&mut p, &inc, &MeasureMode::Reference).unwrap();
        }
        let s = p.s();
        let m = s * rho0.matrix() * s.adjoint();
        let tr = m.trace().re;
        let zt = p.z_log().exp();
        z.push(zt);
        weighted.push(zt * g(&(m / c(tr, 0.0))));
    }

    let mut physical = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = trajectory_rng(conf.seed + 1, i as u64);
        let mut inc = st.new_increments();
        let mut rho = rho0.matrix().clone();
        for _ in 0..conf.steps() {
            st.draw(&mut rng, &mut inc);
            st.sme_step(&mut rho, &inc).unwrap();
        }
        physical.push(g(&rho));
    }

    let (mz, sz) = mean_stderr(&z);
    assert!((mz - 1.0).abs() <= 3.0 * sz, "E[Z] = {mz} ± {sz}");
    let (mw, sw) = mean_stderr(&weighted);
    let (mp, sp) = mean_stderr(&physical);
    assert!((mw - mp).abs() <= 3.0 * (sw * sw + sp * sp).sqrt(), "{mw} ± {sw} vs {mp} ± {sp}");
}

/// Halving dt halves the bias of the ensemble mean.
#[test]
fn weak_order_one() {
    let ex = gallery::qnd_model(1.0).unwrap();
    let exact = evolve_master(&ex.model, &make_projector(&ex.start), 1.0).unwrap();
    let n = 40_000;
    let bias = |dt: f64| {
        let conf = SimConfig::new(dt, 1.0, 23).unwrap();
        let mean = ensemble_projector_mean(&ex.model, &ex.start, &conf, n).unwrap();
        let err = (&mean.mean - exact.matrix()).norm_squared();
        let noise: f64 = mean.stderr_re.iter().chain(mean.stderr_im.iter()).map(|s| s * s).sum();
        (err - noise).max(0.0).sqrt()
    };
    let (coarse, fine) = (bias(0.1), bias(0.05));
    let ratio = coarse / fine;
    assert!((2.0 * 0.7..=2.0 * 1.3).contains(&ratio), "bias {coarse:.4} -> {fine:.4}, ratio {ratio:.3}");
}

#[test]
fn invariant_sample_halves_agree() {
    let ex = gallery::qnd_model(1.0).unwrap();
    let n = 500;
    let conf = SimConfig::new(1e-3, 0.0, 29).unwrap();
    let s = sample_invariant(&ex.model, &ex.start, &conf, 20.0, 2 * n, 0.5).unwrap();
    let atoms = s.measure.atoms();
    let first = EmpiricalMeasure::uniform(atoms[..n].to_vec()).unwrap();
    let second = EmpiricalMeasure::uniform(atoms[n..].to_vec()).unwrap();
    let w = wasserstein1(&first, &second).unwrap();
    assert!(w <= 3.0 / (n as f64).sqrt(), "{w}");
}

/// Leaving rates of the embedded chain: jumps out of `e_i` per unit time spent there.
#[test]
fn markov_embedding_leaving_rates() {
    let rates = [1.0, 2.0, 3.0];
    let q = gallery::cyclic_generator(&rates);
    let ex = gallery::markov_embedding_model(&q, None).unwrap();
    let conf = SimConfig::new(1e-3, 2000.0, 31).unwrap();
    let mut rng = trajectory_rng(conf.seed, 0);
    let mut time = [0.0f64; 3];
    let mut leaves = [0u64; 3];
    let mut current = 0usize;
    run_sse(&ex.model, &ex.start, &conf, &mut rng, |_, x, ev| {
        if let StepEvent::Jump(_) = ev {
            leaves[current] += 1;
            current = (0..3).max_by(|&i, &j| x[i].norm().total_cmp(&x[j].norm())).unwrap();
        } else {
            time[current] += conf.dt;
        }
    })
    .unwrap();
    for i in 0..3 {
        let rate = leaves[i] as f64 / time[i];
        let sigma = (rates[i] / time[i]).sqrt();
        assert!((rate - rates[i]).abs() <= 3.0 * sigma, "state {i}: {rate} vs {}", rates[i]);
    }
}

