//! Analytic invariant angle densities of the qubit examples.
//!
//! Both live on the `Y = 0` great circle, parametrized by `θ ↦ ½(Id + sinθ σx + cosθ σz)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity};

/// Closer than this to a multiple of π the QND density is replaced by its limit `γ`.
const QND_EDGE: f64 = 1e-7;
const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AngleFamily {
    /// Homodyne σz monitoring with σy rotation, measurement strength `gamma`.
    Qnd { gamma: f64 },
    /// Diffusive thermal qubit with absorption rate `a` and emission rate `b`.
    ThermalDiffusive { a: f64, b: f64 },
}

impl AngleFamily {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            AngleFamily::Qnd { gamma } => gamma > 0.0 && gamma.is_finite(),
            AngleFamily::ThermalDiffusive { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid density parameters {self:?}")))
        }
    }

    /// Unnormalized density at `θ`.
    pub fn raw(&self, theta: f64) -> Result<f64> {
        match *self {
            AngleFamily::Qnd { gamma } => qnd_density(gamma, theta),
            AngleFamily::ThermalDiffusive { a, b } => Ok(thermal_density(a, b, theta)),
        }
    }
}

/// `τ(θ) = ∫_θ^π exp((cot x − cot θ)/γ) sin x / sin³θ dx` on `[0, π]`, extended π-periodically.
///
/// Evaluated after `u = cot θ − cot x`, which turns it into
/// `∫_0^∞ e^{−u/γ} ((1+c²)/(1+(c−u)²))^{3/2} du` with `c = cot θ`. The integrand peaks at
/// `u = c`, so the range is split there.
pub fn qnd_density(gamma: f64, theta: f64) -> Result<f64> {
    if !(gamma > 0.0) || !theta.is_finite() {
        return Err(Error::Config(format!("qnd density needs gamma > 0, got {gamma}")));
    }
    let th = theta.rem_euclid(PI);
    if th < QND_EDGE || PI - th < QND_EDGE {
        return Ok(gamma);
    }
    let c = th.cos() / th.sin();
    let log_top = c.mul_add(c, 1.0).ln();
    let f = |u: f64| {
        let d = c - u;
        (-u / gamma + 1.5 * (log_top - d.mul_add(d, 1.0).ln())).exp()
    };
    let abs_tol = 1e-14 * gamma;
    let rel_tol = 1e-12;
    if c <= 0.0 {
        return Ok(integrate_to_infinity(f, 0.0, abs_tol, rel_tol)?.value);
    }
    // Near θ = 0 the range [0, c] is huge while the mass sits within a few γ of 0 and
    // within a few units of c; geometric breakpoints from both ends keep both visible.
    let mut cuts = vec![0.0, c];
    let mut w = gamma.min(1.0);
    while w < c {
        cuts.push(w);
        cuts.push(c - w);
        w *= 2.0;
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut value = integrate_to_infinity(f, c, abs_tol, rel_tol)?.value;
    for pair in cuts.windows(2) {
        value += integrate(f, pair[0], pair[1], abs_tol, rel_tol)?.value;
    }
    Ok(value)
}

/// `τ(θ) = exp(ςz·arctan(ς(cosθ − z))) / (cos²θ + 1 − 2z cosθ)^{3/2}`,
/// `z = (a−b)/(a+b)`, `ς = (a+b)/(2√(ab))`.
pub fn thermal_density(a: f64, b: f64, theta: f64) -> f64 {
    let z = (a - b) / (a + b);
    let s = (a + b) / (2.0 * (a * b).sqrt());
    let ct = theta.cos();
    (s * z * (s * (ct - z)).atan()).exp() / (ct * ct + 1.0 - 2.0 * z * ct).powf(1.5)
}

/// `∫_lo^hi |τ(θ/γ)/(2γ³) − θ⁻³e^{−1/θ}| dθ`, with `τ` the unnormalized QND density set to
/// zero outside `(−π, π]`. Tends to zero as `γ → ∞`.
pub fn qnd_strong_noise_l1(gamma: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(0.0 < lo && lo < hi) {
        return Err(Error::Config(format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let scale = 0.5 / (gamma * gamma * gamma);
    let f = |th: f64| {
        let x = th / gamma;
        let lhs = if x > PI { 0.0 } else { scale * qnd_density(gamma, x).unwrap_or(f64::NAN) };
        (lhs - (-1.0 / th).exp() / (th * th * th)).abs()
    };
    Ok(integrate(f, lo, hi, 1e-10, 1e-8)?.value)
}

/// A normalized angle density on `(−π, π]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AngleDensity {
    pub family: AngleFamily,
    /// `∫_{−π}^{π}` of the unnormalized density.
    pub normalization: f64,
}

impl AngleDensity {
    pub fn new(family: AngleFamily) -> Result<Self> {
        family.validate()?;
        let f = |t: f64| family.raw(t).unwrap_or(f64::NAN);
        let normalization = match family {
            // π-periodic, and smooth inside (0, π)
            AngleFamily::Qnd { .. } => 2.0 * integrate(f, 0.0, PI, 0.0, NORM_TOL)?.value,
            AngleFamily::ThermalDiffusive { .. } => integrate(f, -PI, PI, 0.0, NORM_TOL)?.value,
        };
        if !(normalization > 0.0) || !normalization.is_finite() {
            return Err(Error::Quadrature(normalization));
        }
        Ok(Self { family, normalization })
    }

    pub fn pdf(&self, theta: f64) -> Result<f64> {
        Ok(self.family.raw(theta)? / self.normalization)
    }

    /// Density on a uniform grid of `cells + 1` nodes spanning `[−π, π]`.
    pub fn grid(&self, cells: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = 2.0 * PI / cells as f64;
        let thetas: Vec<f64> = (0..=cells).map(|i| -PI + i as f64 * h).collect();
        let values = thetas.iter().map(|&t| self.pdf(t)).collect::<Result<Vec<_>>>()?;
        Ok((thetas, values))
    }

    /// `m` equal-mass atoms at the midpoint quantiles `(i + ½)/m`, from a trapezoid CDF on a
    /// fine grid.
    pub fn quantile_atoms(&self, m: usize) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::Config("need at least one atom".into()));
        }
        let cells = (40 * m).max(40_000);
        let (thetas, values) = self.grid(cells)?;
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        for i in 0..cells {
            let step = 0.5 * (values[i] + values[i + 1]) * (thetas[i + 1] - thetas[i]);
            cdf.push(cdf[i] + step);
        }
        let total = cdf[cells];
        let mut atoms = Vec::with_capacity(m);
        let mut cell = 0;
        for i in 0..m {
            let q = (i as f64 + 0.5) / m as f64 * total;
            while cdf[cell + 1] < q {
                cell += 1;
            }
            let span = cdf[cell + 1] - cdf[cell];
            let frac = if span > 0.0 { (q - cdf[cell]) / span } else { 0.5 };
            atoms.push(thetas[cell] + frac * (thetas[cell + 1] - thetas[cell]));
        }
        Ok(atoms)
    }
}
