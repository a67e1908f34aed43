//! Synthetic panels from one-factor dynamic factor models.
//!
//! `z[t,j] = c (beta[0,j] f_t + ... + beta[k,j] f_{t-k}) + e[t,j]`, with the
//! scale `c` chosen so that the mean sample variance of the common part is
//! one.
//!
//! Draws are taken from a single generator in a fixed order: factor
//! coefficient, factor innovations, loadings (row by row), idiosyncratic
//! coefficients (one per series), idiosyncratic innovations (series by
//! series, in time order).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gdpc::lagged;
use crate::panel::PanelMatrix;
use crate::rng::{rng_from_seed, SimRng};

const COEFF_BOUND: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioName {
    #[serde(rename = "DFM1")]
    Dfm1,
    #[serde(rename = "DFM1AR")]
    Dfm1Ar,
    #[serde(rename = "DFM2")]
    Dfm2,
    #[serde(rename = "DFM2AR")]
    Dfm2Ar,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::Dfm1,
        ScenarioName::Dfm1Ar,
        ScenarioName::Dfm2,
        ScenarioName::Dfm2Ar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Dfm1 => "DFM1",
            ScenarioName::Dfm1Ar => "DFM1AR",
            ScenarioName::Dfm2 => "DFM2",
            ScenarioName::Dfm2Ar => "DFM2AR",
        }
    }

    /// Stable numeric id used in seed derivation.
    pub fn id(self) -> u64 {
        match self {
            ScenarioName::Dfm1 => 1,
            ScenarioName::Dfm1Ar => 2,
            ScenarioName::Dfm2 => 3,
            ScenarioName::Dfm2Ar => 4,
        }
    }

    pub fn scenario(self) -> DfmScenario {
        DfmScenario::new(self)
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorLaw {
    Ma1,
    Ar1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdioLaw {
    Iid,
    Ar1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DfmScenario {
    pub name: ScenarioName,
    pub k: usize,
    pub factor_law: FactorLaw,
    pub idio_law: IdioLaw,
}

impl DfmScenario {
    pub fn new(name: ScenarioName) -> Self {
        let (k, factor_law, idio_law) = match name {
            ScenarioName::Dfm1 => (1, FactorLaw::Ma1, IdioLaw::Iid),
            ScenarioName::Dfm1Ar => (1, FactorLaw::Ma1, IdioLaw::Ar1),
            ScenarioName::Dfm2 => (2, FactorLaw::Ar1, IdioLaw::Iid),
            ScenarioName::Dfm2Ar => (2, FactorLaw::Ar1, IdioLaw::Ar1),
        };
        Self {
            name,
            k,
            factor_law,
            idio_law,
        }
    }
}

/// Per-replication random parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationParams {
    pub factor_coeff: f64,
    /// One AR coefficient per series; empty for i.i.d. noise.
    pub idio_coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub z: PanelMatrix,
    /// True (scaled) common part.
    pub chi: DMatrix<f64>,
    /// Factor path, length `T + k`, first `k` entries pre-sample.
    pub f: DVector<f64>,
    /// Unscaled loadings, `beta beta' = m I`.
    pub beta: DMatrix<f64>,
    pub c: f64,
    pub e: DMatrix<f64>,
    pub params: SimulationParams,
}

fn draw_coeff(rng: &mut SimRng) -> f64 {
    loop {
        let v = rng.random_range(-COEFF_BOUND..COEFF_BOUND);
        if v != -COEFF_BOUND {
            return v;
        }
    }
}

fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Loadings from an i.i.d. standard normal `(k+1) x m` draw whose rows are
/// orthonormalized (thin QR of the transpose) and scaled by `sqrt(m)`.
pub fn generate_loadings(m: usize, k: usize, rng: &mut SimRng) -> Result<DMatrix<f64>> {
    let rows = k + 1;
    if m < rows {
        return Err(Error::InfeasibleOrthogonalization { rows, m });
    }
    let mut raw = DMatrix::zeros(rows, m);
    for h in 0..rows {
        for j in 0..m {
            raw[(h, j)] = normal(rng);
        }
    }
    let q = raw.transpose().qr().q();
    Ok(q.transpose() * (m as f64).sqrt())
}

/// Factor path of length `T + k` with a coefficient drawn uniformly on
/// `(-0.9, 0.9)`.
pub fn simulate_factor(law: FactorLaw, t: usize, k: usize, rng: &mut SimRng) -> (DVector<f64>, f64) {
    let coeff = draw_coeff(rng);
    (simulate_factor_with_coeff(law, t, k, coeff, rng), coeff)
}

/// [`simulate_factor`] with a fixed coefficient.
///
/// MA(1) uses `T + k + 1` innovations. AR(1) starts from its stationary law
/// `N(0, 1/(1 - coeff^2))`.
pub fn simulate_factor_with_coeff(
    law: FactorLaw,
    t: usize,
    k: usize,
    coeff: f64,
    rng: &mut SimRng,
) -> DVector<f64> {
    let n = t + k;
    match law {
        FactorLaw::Ma1 => {
            let eps: Vec<f64> = (0..=n).map(|_| normal(rng)).collect();
            DVector::from_fn(n, |p, _| eps[p + 1] + coeff * eps[p])
        }
        FactorLaw::Ar1 => {
            let mut f = DVector::zeros(n);
            f[0] = normal(rng) / (1.0 - coeff * coeff).sqrt();
            for p in 1..n {
                f[p] = coeff * f[p - 1] + normal(rng);
            }
            f
        }
    }
}

/// `T x m` idiosyncratic part with unit population variance per series.
/// Returns the per-series AR coefficients (empty for i.i.d. noise).
pub fn simulate_idiosyncratic(
    law: IdioLaw,
    t: usize,
    m: usize,
    rng: &mut SimRng,
) -> (DMatrix<f64>, Vec<f64>) {
    match law {
        IdioLaw::Iid => (iid_noise(t, m, rng), Vec::new()),
        IdioLaw::Ar1 => {
            let coeffs: Vec<f64> = (0..m).map(|_| draw_coeff(rng)).collect();
            let e = simulate_ar_noise(t, &coeffs, rng);
            (e, coeffs)
        }
    }
}

fn iid_noise(t: usize, m: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(t, m);
    for j in 0..m {
        for s in 0..t {
            e[(s, j)] = normal(rng);
        }
    }
    e
}

/// Independent AR(1) series with the given coefficients, innovations
/// `N(0, 1 - rho^2)` and a `N(0, 1)` start, so each has variance one.
pub fn simulate_ar_noise(t: usize, coeffs: &[f64], rng: &mut SimRng) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(t, coeffs.len());
    for (j, &rho) in coeffs.iter().enumerate() {
        let sd = (1.0 - rho * rho).sqrt();
        e[(0, j)] = normal(rng);
        for s in 1..t {
            e[(s, j)] = rho * e[(s - 1, j)] + sd * normal(rng);
        }
    }
    e
}

/// Scales the common part to unit mean sample variance and adds the noise.
pub fn assemble_dfm(beta: &DMatrix<f64>, f: &DVector<f64>, e: &DMatrix<f64>) -> Result<SimulatedPanel> {
    let k = beta.nrows().checked_sub(1).ok_or_else(|| Error::DimensionMismatch {
        expected: "at least one loading row".into(),
        found: "none".into(),
    })?;
    let (t, m) = e.shape();
    if beta.ncols() != m || f.len() != t + k {
        return Err(Error::DimensionMismatch {
            expected: format!("beta {}x{m}, f of length {}", k + 1, t + k),
            found: format!("beta {}x{}, f of length {}", beta.nrows(), beta.ncols(), f.len()),
        });
    }
    let unscaled = lagged(f, k) * beta;
    let mean_var = unscaled
        .column_iter()
        .map(|col| {
            let mean = col.sum() / t as f64;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64
        })
        .sum::<f64>()
        / m as f64;
    if !(mean_var > 0.0) {
        return Err(Error::DegenerateFactor("common part has zero variance".into()));
    }
    let c = 1.0 / mean_var.sqrt();
    let chi = unscaled * c;
    let z = PanelMatrix::new(&chi + e)?;
    Ok(SimulatedPanel {
        z,
        chi,
        f: f.clone(),
        beta: beta.clone(),
        c,
        e: e.clone(),
        params: SimulationParams::default(),
    })
}

/// Simulates one panel of `scenario` from a generator seeded with `seed`.
pub fn simulate(scenario: DfmScenario, t: usize, m: usize, seed: u64) -> Result<SimulatedPanel> {
    if t < 2 || m < 1 {
        return Err(Error::InvalidPanel(format!("cannot simulate a {t}x{m} panel")));
    }
    let mut rng = rng_from_seed(seed);
    let (f, factor_coeff) = simulate_factor(scenario.factor_law, t, scenario.k, &mut rng);
    let beta = generate_loadings(m, scenario.k, &mut rng)?;
    let (e, idio_coeffs) = simulate_idiosyncratic(scenario.idio_law, t, m, &mut rng);
    let mut panel = assemble_dfm(&beta, &f, &e)?;
    panel.params = SimulationParams {
        factor_coeff,
        idio_coeffs,
    };
    Ok(panel)
}
