//! Named example models with their known properties, used as oracles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use crate::measure::iota;
use crate::error::{Error, Result};
use crate::lindblad::OperatorModel;
use crate::measure::AngleFamily;
use crate::operator::{c, ComplexOperator, HermitianOperator, ProjectivePoint, C64};
use crate::purification::PurVerdict;

/// Known invariant law of an example.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticInvariant {
    /// Image of an angle density under `ι`.
    Angle { family: AngleFamily },
    /// Finitely many atoms `(point, weight)`.
    Atoms { atoms: Vec<(ProjectivePoint, f64)> },
    /// Basis states weighted by the stationary law of the generator `q`.
    Chain { q: Vec<Vec<f64>>, stationary: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Expected {
    pub erg_holds: bool,
    pub pur_verdict: PurVerdict,
    pub analytic_invariant: Option<AnalyticInvariant>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedExample {
    pub name: String,
    pub model: OperatorModel,
    pub expected: Expected,
    /// Default initial state for trajectory runs.
    pub start: ProjectivePoint,
}

/// Default start angle on the `Y = 0` circle.
pub const THETA0: f64 = PI / 2.0;

fn r(x: f64) -> C64 {
    c(x, 0.0)
}

fn pauli_x() -> ComplexOperator {
    ComplexOperator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

fn pauli_y() -> ComplexOperator {
    ComplexOperator::from_row_slice(2, &[r(0.0), c(0.0, -1.0), c(0.0, 1.0), r(0.0)]).unwrap()
}

fn pauli_z() -> ComplexOperator {
    ComplexOperator::from_real(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

fn sigma_plus() -> ComplexOperator {
    ComplexOperator::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap()
}

fn sigma_minus() -> ComplexOperator {
    ComplexOperator::from_real(2, &[0.0, 0.0, 1.0, 0.0]).unwrap()
}

/// `(σx, σy, σz)`
pub fn paulis() -> [ComplexOperator; 3] {
    [pauli_x(), pauli_y(), pauli_z()]
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `H = σy`, one diffusive channel `L = √γ σz`.
pub fn qnd_model(gamma: f64) -> Result<NamedExample> {
    positive("gamma", gamma)?;
    let model = OperatorModel::new(
        HermitianOperator::new(pauli_y())?,
        vec![pauli_z().scale(r(gamma.sqrt()))],
        vec![],
    )?;
    Ok(NamedExample {
        name: "qnd".into(),
        model,
        expected: Expected {
            erg_holds: true,
            pur_verdict: PurVerdict::HoldsCertified,
            analytic_invariant: Some(AnalyticInvariant::Angle {
                family: AngleFamily::Qnd { gamma },
            }),
        },
        start: iota(THETA0),
    })
}

/// `H = 0`, diffusive channels `√a σ₊` and `√b σ₋`.
pub fn thermal_diffusive_model(a: f64, b: f64) -> Result<NamedExample> {
    positive("a", a)?;
    positive("b", b)?;
    let model = OperatorModel::new(
        HermitianOperator::zeros(2),
        vec![sigma_plus().scale(r(a.sqrt())), sigma_minus().scale(r(b.sqrt()))],
        vec![],
    )?;
    Ok(NamedExample {
        name: "thermal_diffusive".into(),
        model,
        expected: Expected {
            erg_holds: true,
            pur_verdict: PurVerdict::HoldsCertified,
            analytic_invariant: Some(AnalyticInvariant::Angle {
                family: AngleFamily::ThermalDiffusive { a, b },
            }),
        },
        start: iota(THETA0),
    })
}

/// `H = 0`, jump channels `√a σ₊` (e₂ → e₁) and `√b σ₋` (e₁ → e₂).
pub fn thermal_jump_model(a: f64, b: f64) -> Result<NamedExample> {
    positive("a", a)?;
    positive("b", b)?;
    let model = OperatorModel::new(
        HermitianOperator::zeros(2),
        vec![],
        vec![sigma_plus().scale(r(a.sqrt())), sigma_minus().scale(r(b.sqrt()))],
    )?;
    let p = a / (a + b);
    Ok(NamedExample {
        name: "thermal_jump".into(),
        model,
        expected: Expected {
            erg_holds: true,
            pur_verdict: PurVerdict::HoldsCertified,
            analytic_invariant: Some(AnalyticInvariant::Atoms {
                atoms: vec![(ProjectivePoint::basis(2, 0), p), (ProjectivePoint::basis(2, 1), 1.0 - p)],
            }),
        },
        start: ProjectivePoint::basis(2, 0),
    })
}

fn validate_generator(q: &[Vec<f64>]) -> Result<usize> {
    let n = q.len();
    if n == 0 || q.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidGenerator("generator must be a nonempty square matrix".into()));
    }
    for (i, row) in q.iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGenerator(format!("row {i} has a non-finite entry")));
        }
        if row.iter().enumerate().any(|(j, &x)| j != i && x < 0.0) {
            return Err(Error::InvalidGenerator(format!("row {i} has a negative rate")));
        }
        let scale = row.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
        let sum: f64 = row.iter().sum();
        if sum.abs() > 1e-12 * scale {
            return Err(Error::InvalidGenerator(format!("row {i} sums to {sum}")));
        }
        if !row.iter().enumerate().any(|(j, &x)| j != i && x > 0.0) {
            return Err(Error::InvalidGenerator(format!("state {i} has no outgoing rate")));
        }
    }
    Ok(n)
}

/// Ordered pairs `(i, j)`, `i ≠ j`, with `q[i][j] > 0`: the jump channels of the embedding,
/// in channel order.
pub fn markov_channels(q: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = q.len();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && q[i][j] > 0.0)
        .collect()
}

/// Stationary law of a generator and the dimension of `ker Qᵀ`.
pub fn markov_stationary(q: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    let n = validate_generator(q)?;
    let qt = DMatrix::from_fn(n, n, |i, j| q[j][i]);
    let svd = qt.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested");
    let scale = svd.singular_values.max().max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let kernel = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= 1e-10 * scale)
        .count();
    let v: Vec<f64> = vt.row(order[0]).iter().copied().collect();
    let s: f64 = v.iter().sum();
    Ok((v.iter().map(|x| (x / s).max(0.0)).collect(), kernel))
}

/// Jump channels `√Q_ij e_j e_i*`, diagonal Hamiltonian `h_diag` (zero when `None`).
pub fn markov_embedding_model(q: &[Vec<f64>], h_diag: Option<&[f64]>) -> Result<NamedExample> {
    let n = validate_generator(q)?;
    let h = match h_diag {
        Some(d) if d.len() != n => {
            return Err(Error::DimensionMismatch { expected: n, got: d.len() });
        }
        Some(d) => HermitianOperator::from_real_diagonal(d),
        None => HermitianOperator::zeros(n),
    };
    let jumps = markov_channels(q)
        .into_iter()
        .map(|(i, j)| {
            let mut m = ComplexOperator::zeros(n).into_matrix();
            m[(j, i)] = r(q[i][j].sqrt());
            ComplexOperator::new(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = OperatorModel::new(h, vec![], jumps)?;
    let (stationary, kernel) = markov_stationary(q)?;
    Ok(NamedExample {
        name: "markov".into(),
        model,
        expected: Expected {
            erg_holds: kernel == 1,
            pur_verdict: PurVerdict::HoldsCertified,
            analytic_invariant: Some(AnalyticInvariant::Chain {
                q: q.to_vec(),
                stationary,
            }),
        },
        start: ProjectivePoint::basis(n, 0),
    })
}

/// Cyclic generator on `rates.len()` states: `i → i+1` at `rates[i]`.
pub fn cyclic_generator(rates: &[f64]) -> Vec<Vec<f64>> {
    let n = rates.len();
    let mut q = vec![vec![0.0; n]; n];
    for (i, &rate) in rates.iter().enumerate() {
        q[i][(i + 1) % n] += rate;
        q[i][i] -= rate;
    }
    q
}

/// The three-level model with a two-dimensional dark subspace.
pub fn counterexample_model() -> Result<NamedExample> {
    let s3 = 1.0 / 3f64.sqrt();
    let u = nalgebra::DVector::from_vec(vec![r(s3), r(s3), r(s3)]);
    let h2 = 0.5f64.sqrt();
    let v = nalgebra::DVector::from_vec(vec![r(h2), r(0.0), r(h2)]);
    let e = |i: usize| {
        let mut x = nalgebra::DVector::from_element(3, r(0.0));
        x[i] = r(1.0);
        x
    };
    let l0 = ComplexOperator::outer(&e(0), &u);
    let l1 = &ComplexOperator::outer(&v, &v).scale(r(2.0)) + &ComplexOperator::outer(&e(1), &e(1));
    let c2 = ComplexOperator::outer(&u, &e(0));
    let model = OperatorModel::new(HermitianOperator::zeros(3), vec![l0, l1], vec![c2])?;
    Ok(NamedExample {
        name: "counterexample".into(),
        model,
        expected: Expected {
            erg_holds: true,
            pur_verdict: PurVerdict::Fails,
            analytic_invariant: None,
        },
        start: ProjectivePoint::basis(3, 0),
    })
}

/// Parameters accepted by [`named`]; unset fields take the defaults listed in [`list`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GalleryParams {
    pub gamma: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub q: Option<Vec<Vec<f64>>>,
    pub h_diag: Option<Vec<f64>>,
}

/// `(name, description)` of every example.
pub fn list() -> Vec<(&'static str, &'static str)> {
    vec![
        ("qnd", "sigma_z homodyne monitoring with sigma_y rotation; --gamma (default 1)"),
        ("thermal_diffusive", "diffusive thermal qubit; --a, --b (default 2, 1)"),
        ("thermal_jump", "photon-counting thermal qubit; --a, --b (default 2, 1)"),
        ("markov", "classical chain embedded as jumps; default cyclic rates 1, 2, 3"),
        ("counterexample", "three levels, ergodic but not purifying"),
    ]
}

pub fn named(name: &str, p: &GalleryParams) -> Result<NamedExample> {
    let a = p.a.unwrap_or(2.0);
    let b = p.b.unwrap_or(1.0);
    match name {
        "qnd" => qnd_model(p.gamma.unwrap_or(1.0)),
        "thermal_diffusive" => thermal_diffusive_model(a, b),
        "thermal_jump" => thermal_jump_model(a, b),
        "markov" => {
            let q = p.q.clone().unwrap_or_else(|| cyclic_generator(&[1.0, 2.0, 3.0]));
            markov_embedding_model(&q, p.h_diag.as_deref())
        }
        "counterexample" => counterexample_model(),
        other => Err(Error::UnknownExample(other.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::CMatrix;

    fn close(a: &CMatrix, b: &CMatrix) -> bool {
        (a - b).norm() < 1e-14
    }

    #[test]
    fn qnd_matrices() {
        let ex = qnd_model(1.0).unwrap();
        assert!(close(ex.model.hamiltonian().matrix(), pauli_y().matrix()));
        assert!(close(ex.model.diffusive()[0].matrix(), pauli_z().matrix()));
        let g = qnd_model(4.0).unwrap();
        assert!(close(g.model.diffusive()[0].matrix(), pauli_z().scale(r(2.0)).matrix()));
    }

    #[test]
    fn thermal_matrices() {
        let ex = thermal_diffusive_model(4.0, 9.0).unwrap();
        let l = ex.model.diffusive();
        assert_eq!(l[0].matrix()[(0, 1)], r(2.0));
        assert_eq!(l[1].matrix()[(1, 0)], r(3.0));
        // σ± = ½(σx ± iσy)
        let [x, y, _] = paulis();
        let sp = (&x + &y.scale(c(0.0, 1.0))).scale(r(0.5));
        assert!(close(sp.matrix(), sigma_plus().matrix()));
        assert!(close(sp.adjoint().matrix(), sigma_minus().matrix()));
    }

    #[test]
    fn thermal_jump_weights() {
        let weights = |a, b| match thermal_jump_model(a, b).unwrap().expected.analytic_invariant {
            Some(AnalyticInvariant::Atoms { atoms }) => (atoms[0].1, atoms[1].1),
            _ => unreachable!(),
        };
        let (p, q) = weights(2.0, 1.0);
        assert!((p - 2.0 / 3.0).abs() < 1e-15 && (q - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(weights(1.5, 1.5), (0.5, 0.5));
    }

    #[test]
    fn markov_two_state_matches_thermal() {
        let (a, b) = (2.0, 1.0);
        let q = vec![vec![-b, b], vec![a, -a]];
        let (pi, kernel) = markov_stationary(&q).unwrap();
        assert_eq!(kernel, 1);
        assert!((pi[0] - a / (a + b)).abs() < 1e-12);
        let ex = markov_embedding_model(&q, None).unwrap();
        let t = thermal_jump_model(a, b).unwrap();
        for (x, y) in ex.model.jump().iter().zip(t.model.jump().iter().rev()) {
            assert!(close(x.matrix(), y.matrix()));
        }
    }

    #[test]
    fn markov_cyclic_uniform_and_weighted() {
        let (pi, _) = markov_stationary(&cyclic_generator(&[1.0, 1.0, 1.0])).unwrap();
        for p in pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let (pi, _) = markov_stationary(&cyclic_generator(&[1.0, 2.0, 3.0])).unwrap();
        let want = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        for (p, w) in pi.iter().zip(want) {
            assert!((p - w).abs() < 1e-12);
        }
    }

    #[test]
    fn markov_rejects_bad_generators() {
        assert!(markov_embedding_model(&[vec![-1.0, 1.0], vec![0.0, 0.0]], None).is_err());
        assert!(markov_embedding_model(&[vec![-1.0, 2.0], vec![1.0, -1.0]], None).is_err());
        assert!(markov_embedding_model(&[vec![1.0, -1.0], vec![1.0, -1.0]], None).is_err());
        assert!(markov_embedding_model(&[vec![-1.0, 1.0]], None).is_err());
        let q = cyclic_generator(&[1.0, 1.0]);
        assert!(markov_embedding_model(&q, Some(&[1.0])).is_err());
    }

    #[test]
    fn reducible_chain_is_not_ergodic() {
        // two disjoint two-state blocks
        let q = vec![
            vec![-1.0, 1.0, 0.0, 0.0],
            vec![1.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0, 1.0],
            vec![0.0, 0.0, 1.0, -1.0],
        ];
        assert!(!markov_embedding_model(&q, None).unwrap().expected.erg_holds);
    }

    #[test]
    fn counterexample_observables() {
        let m = counterexample_model().unwrap().model;
        let s3 = 1.0 / 3f64.sqrt();
        let l0 = &m.diffusive()[0];
        let o0 = (l0 + &l0.adjoint()).into_matrix();
        let want0 = [[2.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let l1 = &m.diffusive()[1];
        let o1 = (l1 + &l1.adjoint()).into_matrix();
        let want1 = [[2.0, 0.0, 2.0], [0.0, 2.0, 0.0], [2.0, 0.0, 2.0]];
        let cc = &m.jump()[0];
        let o2 = (&cc.adjoint() * cc).into_matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!((o0[(i, j)] - r(s3 * want0[i][j])).norm() < 1e-15);
                assert!((o1[(i, j)] - r(want1[i][j])).norm() < 1e-15);
                let e11 = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert!((o2[(i, j)] - r(e11)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn named_lookup() {
        for (name, _) in list() {
            let ex = named(name, &GalleryParams::default()).unwrap();
            assert_eq!(ex.name, name);
            assert_eq!(ex.start.dim(), ex.model.dim());
        }
        assert!(matches!(named("nope", &GalleryParams::default()), Err(Error::UnknownExample(_))));
    }
}
