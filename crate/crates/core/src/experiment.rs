//! Reproducible experiment runners behind the command-line tool.
//!
//! Every runner takes an [`ExperimentConfig`], resolves command defaults into it, writes its
//! data files into `out`, and echoes the resolved config to `out/config.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gallery::{self, AnalyticInvariant, GalleryParams, NamedExample};
use crate::lindblad::{check_l_erg, OperatorModel};
use crate::measure::{
    circle_w1, fit_rate, iota, sample_invariant, two_ensemble_w1, AngleDensity, TRANSPORT_BUDGET,
};
use crate::operator::{c, CVector, ProjectivePoint};
use crate::purification::{check_pur, purification_diagnostic};
use crate::trajectory::{coupling_distance, estimate_f, SimConfig};

pub const FORMAT_VERSION: &str = "1";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gallery: Option<String>,
    pub params: GalleryParams,
    pub model_file: Option<PathBuf>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub samples: Option<usize>,
    pub burn_in: Option<f64>,
    pub thinning: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub m_atoms: Option<usize>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("--seed is required for stochastic commands".into()))
    }

    fn sim(&self) -> Result<SimConfig> {
        SimConfig::new(self.dt.unwrap_or(1e-3), self.horizon.unwrap_or(1.0), self.seed()?)
    }
}

/// Model plus whatever the gallery knows about it.
pub struct LoadedModel {
    pub model: OperatorModel,
    pub example: Option<NamedExample>,
    pub start: ProjectivePoint,
}

pub fn load_model(cfg: &ExperimentConfig) -> Result<LoadedModel> {
    match (&cfg.gallery, &cfg.model_file) {
        (Some(name), None) => {
            let ex = gallery::named(name, &cfg.params)?;
            Ok(LoadedModel {
                model: ex.model.clone(),
                start: ex.start.clone(),
                example: Some(ex),
            })
        }
        (None, Some(path)) => {
            let model = OperatorModel::from_json(&fs::read_to_string(path)?)?;
            let start = ProjectivePoint::basis(model.dim(), 0);
            Ok(LoadedModel {
                model,
                example: None,
                start,
            })
        }
        _ => Err(Error::Config("give exactly one of --gallery or --model".into())),
    }
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), contents)?;
    Ok(())
}

fn write_json(out: &Path, name: &str, v: &Value) -> Result<()> {
    write(out, name, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn echo_config(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    write_json(
        &cfg.out,
        "config.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "command": command,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
        }),
    )
}

/// Evenly spaced grid `0, h, ..., horizon` with `points` intervals.
pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    (0..=points).map(|i| horizon * i as f64 / points as f64).collect()
}

/// `(L-erg)` and `(Pur)` reports. Verdicts are data: this never fails on a negative verdict.
pub fn cmd_check(cfg: &mut ExperimentConfig) -> Result<Value> {
    let m = load_model(cfg)?;
    let erg = check_l_erg(&m.model)?;
    let pur = check_pur(&m.model);
    let mut v = json!({ "format_version": FORMAT_VERSION, "erg": erg, "pur": pur });
    if let Some(ex) = &m.example {
        v["expected"] = serde_json::to_value(&ex.expected)?;
        v["matches_expected"] = json!(ex.expected.erg_holds == erg.holds && ex.expected.pur_verdict == pur.verdict);
    }
    write_json(&cfg.out, "check.json", &v)?;
    echo_config(cfg, "check")?;
    Ok(v)
}

/// Subsample evenly so that `n * m` fits the transport budget.
fn thin_to_budget(xs: &[f64], m: usize) -> Vec<f64> {
    let cap = TRANSPORT_BUDGET / m.max(1);
    if xs.len() <= cap {
        return xs.to_vec();
    }
    (0..cap).map(|i| xs[i * xs.len() / cap]).collect()
}

/// Long-run sample of the invariant law, compared with the analytic one when known.
pub fn cmd_invariant(cfg: &mut ExperimentConfig) -> Result<Value> {
    let m = load_model(cfg)?;
    let erg = check_l_erg(&m.model)?;
    cfg.dt.get_or_insert(1e-3);
    cfg.thinning.get_or_insert(0.5);
    cfg.samples.get_or_insert(2000);
    if cfg.burn_in.is_none() {
        cfg.burn_in = Some(if erg.spectral_gap > 0.0 { 10.0 / erg.spectral_gap } else { 50.0 });
    }
    let sim = cfg.sim()?;
    let s = sample_invariant(
        &m.model,
        &m.start,
        &sim,
        cfg.burn_in.unwrap(),
        cfg.samples.unwrap(),
        cfg.thinning.unwrap(),
    )?;
    write(&cfg.out, "samples.csv", &s.measure.to_csv())?;
    let mut v = json!({
        "format_version": FORMAT_VERSION,
        "n_samples": s.measure.len(),
        "erg_holds": s.erg_holds,
        "jump_counts": s.jump_counts,
        "sampled_jumps": s.sampled_jumps,
        "degenerate_jumps": s.degenerate_jumps,
    });
    match m.example.as_ref().and_then(|e| e.expected.analytic_invariant.clone()) {
        Some(AnalyticInvariant::Angle { family }) => {
            let m_atoms = *cfg.m_atoms.get_or_insert(1000);
            let angles = thin_to_budget(&s.angles()?, m_atoms);
            let d = AngleDensity::new(family)?;
            v["comparison"] = json!({
                "kind": "circle_w1",
                "family": family,
                "m_atoms": m_atoms,
                "samples_used": angles.len(),
                "distance": circle_w1(&angles, &d, m_atoms)?,
            });
        }
        Some(AnalyticInvariant::Atoms { atoms }) => {
            let n_eff: u64 = s.sampled_jumps.iter().sum();
            let rows: Vec<Value> = atoms
                .iter()
                .map(|(x, p)| {
                    let got = s.measure.mass_near(x, 1e-6);
                    let sigma = (p * (1.0 - p) / (n_eff.max(1) as f64)).sqrt();
                    json!({ "expected": p, "empirical": got, "sigma": sigma, "within_3_sigma": (got - p).abs() <= 3.0 * sigma })
                })
                .collect();
            v["comparison"] = json!({ "kind": "atoms", "n_eff": n_eff, "atoms": rows });
        }
        Some(AnalyticInvariant::Chain { stationary, .. }) => {
            let k = stationary.len();
            let occ: Vec<f64> = (0..k)
                .map(|i| s.measure.mass_near(&ProjectivePoint::basis(k, i), 1e-6))
                .collect();
            let l1: f64 = occ.iter().zip(&stationary).map(|(a, b)| (a - b).abs()).sum();
            v["comparison"] = json!({ "kind": "chain", "stationary": stationary, "empirical": occ, "l1": l1 });
        }
        None => {}
    }
    write_json(&cfg.out, "invariant.json", &v)?;
    echo_config(cfg, "invariant")?;
    Ok(v)
}

fn haar_point(rng: &mut ChaCha8Rng, k: usize) -> ProjectivePoint {
    let v = CVector::from_fn(k, |_, _| c(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    ProjectivePoint::new(v).expect("nonzero with probability one")
}

/// Two-ensemble W₁ decay: a point mass at the default start against a spread-out law
/// (uniform on the `Y = 0` circle for qubits, Haar otherwise).
pub fn cmd_mixing(cfg: &mut ExperimentConfig) -> Result<Value> {
    let m = load_model(cfg)?;
    cfg.dt.get_or_insert(1e-3);
    cfg.samples.get_or_insert(500);
    let grid = cfg.t_grid.get_or_insert_with(|| uniform_grid(4.0, 8)).clone();
    let sim = cfg.sim()?;
    let k = m.model.dim();
    let start = m.start.clone();
    let n = cfg.samples.unwrap();
    let burn_in = *cfg.burn_in.get_or_insert(50.0);
    let thinning = *cfg.thinning.get_or_insert(0.5);
    let inv = sample_invariant(&m.model, &m.start, &sim, burn_in, n, thinning)?;
    let curve = two_ensemble_w1(
        &m.model,
        |_| start.clone(),
        |rng| {
            if k == 2 {
                iota(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            } else {
                haar_point(rng, k)
            }
        },
        &grid,
        n,
        &sim,
        Some(&inv.measure),
    )?;
    let to_inv = curve.to_reference.clone().unwrap_or_default();
    let mut csv = String::from("t,w1_pair,w1_invariant\n");
    for i in 0..grid.len() {
        csv.push_str(&format!("{},{},{}\n", grid[i], curve.curve.value[i], to_inv[i]));
    }
    write(&cfg.out, "mixing.csv", &csv)?;
    let v = json!({
        "format_version": FORMAT_VERSION,
        "fit": curve.fit,
        "decaying": curve.fit.as_ref().is_some_and(|f| f.decaying),
        "fit_invariant": fit_rate(&grid, &to_inv, None).ok(),
        "samples": n,
    });
    write_json(&cfg.out, "mixing.json", &v)?;
    echo_config(cfg, "mixing")?;
    Ok(v)
}

/// `f(t) = E‖∧²S_t‖` under the reference measure.
pub fn cmd_ftrace(cfg: &mut ExperimentConfig) -> Result<Value> {
    let m = load_model(cfg)?;
    cfg.dt.get_or_insert(1e-3);
    cfg.samples.get_or_insert(1000);
    let grid = cfg.t_grid.get_or_insert_with(|| uniform_grid(20.0, 10)).clone();
    let sim = cfg.sim()?;
    let f = estimate_f(&m.model, &grid, cfg.samples.unwrap(), &sim)?;
    write(&cfg.out, "ftrace.csv", &f.curve.to_csv())?;
    let v = json!({ "format_version": FORMAT_VERSION, "fit": f.fit, "relative_stderr": f.relative_stderr, "samples": f.samples });
    write_json(&cfg.out, "ftrace.json", &v)?;
    echo_config(cfg, "ftrace")?;
    Ok(v)
}

/// Distance between the trajectory from the default start and its maximum-likelihood
/// estimate.
pub fn cmd_coupling(cfg: &mut ExperimentConfig) -> Result<Value> {
    let m = load_model(cfg)?;
    cfg.dt.get_or_insert(1e-3);
    cfg.samples.get_or_insert(1000);
    let grid = cfg.t_grid.get_or_insert_with(|| uniform_grid(10.0, 10)).clone();
    let sim = cfg.sim()?;
    let start = m.start.clone();
    let cc = coupling_distance(&m.model, |_| start.clone(), &grid, cfg.samples.unwrap(), &sim)?;
    let mut csv = String::from("t,mean,stderr,median\n");
    for i in 0..cc.curve.len() {
        csv.push_str(&format!("{},{},{},{}\n", cc.curve.t[i], cc.curve.value[i], cc.curve.stderr[i], cc.median[i]));
    }
    write(&cfg.out, "coupling.csv", &csv)?;
    let fit = fit_rate(&cc.curve.t, &cc.curve.value, Some(&cc.curve.stderr)).ok();
    let v = json!({ "format_version": FORMAT_VERSION, "violations": cc.violations, "fit": fit });
    write_json(&cfg.out, "coupling.json", &v)?;
    echo_config(cfg, "coupling")?;
    Ok(v)
}

/// `E[1 − λ_max(M_t)]` under the law started from `Id/k`.
pub fn cmd_purify(cfg: &mut ExperimentConfig) -> Result<Value> {
    let m = load_model(cfg)?;
    cfg.dt.get_or_insert(1e-3);
    cfg.horizon.get_or_insert(20.0);
    cfg.samples.get_or_insert(500);
    let sim = cfg.sim()?;
    let curve = purification_diagnostic(&m.model, &sim, cfg.samples.unwrap(), 20)?;
    let mut csv = String::from("t,mean,stderr\n");
    for i in 0..curve.len() {
        csv.push_str(&format!("{},{},{}\n", curve.t[i], curve.value[i], curve.stderr[i]));
    }
    write(&cfg.out, "purify.csv", &csv)?;
    let fit = fit_rate(&curve.t, &curve.value, Some(&curve.stderr)).ok();
    let v = json!({
        "format_version": FORMAT_VERSION,
        "terminal": curve.value.last(),
        "terminal_stderr": curve.stderr.last(),
        "fit": fit,
    });
    write_json(&cfg.out, "purify.json", &v)?;
    echo_config(cfg, "purify")?;
    Ok(v)
}

/// Write the example's model file and its checker regression.
pub fn cmd_gallery_run(name: &str, cfg: &mut ExperimentConfig) -> Result<Value> {
    cfg.gallery = Some(name.to_string());
    cfg.model_file = None;
    let ex = gallery::named(name, &cfg.params)?;
    write(&cfg.out, "model.json", &(ex.model.to_json()? + "\n"))?;
    cmd_check(cfg)
}
