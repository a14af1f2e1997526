//! Downstream analyses: hiring-cost calibration, the difference-in-
//! difference-in-difference wage effect, simulated minimum-wage employment
//! effects, counterfactual employment at frozen tightness, and wage and skill
//! concession regressions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{ols, tsls, Coefficient, Covariance, Dataset, EstimateReport, EstimationError, FixedEffect, RegressionSpec};
use crate::io::CounterfactualRecord;
use crate::model::{Calibration, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }
}

/// Solves the hiring-cost calibration for the pre-match cost share.
pub fn calibrate(inputs: &Calibration) -> Result<Calibration, PolicyError> {
    Ok(inputs.solve()?)
}

/// Regresses wage growth on the bite, the post-introduction cohort dummy and
/// their interaction (robust errors) and returns the interaction.
pub fn didid_wage_effect(
    dln_wage: &[f64],
    bite: &[f64],
    cohort: &[f64],
) -> Result<(Coefficient, EstimateReport), PolicyError> {
    let n = dln_wage.len();
    if bite.len() != n || cohort.len() != n {
        return Err(PolicyError::Invalid("wage growth, bite and cohort must have equal length".into()));
    }
    let data = Dataset::new(n)
        .with_column("dln_wage", dln_wage.to_vec())?
        .with_column("bite", bite.to_vec())?
        .with_column("cohort", cohort.to_vec())?
        .with_column("bite_x_cohort", bite.iter().zip(cohort).map(|(b, c)| b * c).collect())?;
    let spec = RegressionSpec::new("dln_wage", &["bite_x_cohort"]).exogenous(&["bite", "cohort"]);
    let rep = ols(&spec, &data)?;
    let coef = rep.coefficient("bite_x_cohort").expect("regressor present").clone();
    Ok((coef, rep))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinWageInputs {
    pub elasticity: Estimate,
    /// Aggregate proportional wage change (interaction effect times mean bite).
    pub wage_effect: Estimate,
    pub workforce: f64,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinWageResult {
    pub employment_change: f64,
    pub std_error: f64,
    pub draws: usize,
}

fn draw_rng(seed: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    rng
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// `ΔL = η · wage effect · L`, with a standard error from independent normal
/// draws of the elasticity and the wage effect. Draw `k` uses its own
/// random stream, so results do not depend on the thread count.
pub fn minwage_effect(inp: &MinWageInputs) -> Result<MinWageResult, PolicyError> {
    if inp.draws == 0 {
        return Err(PolicyError::Invalid("draws must be at least 1".into()));
    }
    if !(inp.workforce > 0.0) {
        return Err(PolicyError::Invalid(format!("workforce must be positive, got {}", inp.workforce)));
    }
    let point = inp.elasticity.value * inp.wage_effect.value * inp.workforce;
    let sims: Vec<f64> = (0..inp.draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = draw_rng(inp.seed, k);
            let eta = inp.elasticity.value + inp.elasticity.se * std_normal(&mut rng);
            let we = inp.wage_effect.value + inp.wage_effect.se * std_normal(&mut rng);
            eta * we * inp.workforce
        })
        .collect();
    Ok(MinWageResult { employment_change: point, std_error: sample_sd(&sims), draws: inp.draws })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChangeConvention {
    /// Relative tightness change measured in logs.
    #[default]
    LogChange,
    /// Relative tightness change measured as `θ_t/θ_s − 1`.
    LevelChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CounterfactualPath {
    /// One adjustment from the base year to each year.
    #[default]
    FromBase,
    /// Year-on-year adjustments compounded.
    Chained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSeries {
    pub name: String,
    pub employment: Vec<f64>,
    pub eta_lt: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualInputs {
    pub years: Vec<i32>,
    pub tightness: Vec<f64>,
    pub groups: Vec<GroupSeries>,
    pub base_year: i32,
    #[serde(default)]
    pub convention: ChangeConvention,
    #[serde(default)]
    pub path: CounterfactualPath,
    pub draws: usize,
    pub seed: u64,
    /// Two-sided coverage of the reported interval.
    pub ci_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPath {
    pub name: String,
    pub factual: Vec<f64>,
    pub counterfactual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub years: Vec<i32>,
    pub factual: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub groups: Vec<GroupPath>,
    /// Counterfactual minus factual in the last year.
    pub gap: f64,
    pub gap_ci: (f64, f64),
}

impl CounterfactualResult {
    pub fn to_records(&self) -> Vec<CounterfactualRecord> {
        (0..self.years.len())
            .map(|t| CounterfactualRecord {
                year: self.years[t],
                factual: self.factual[t],
                counterfactual: self.counterfactual[t],
                ci_lower: self.ci_lower[t],
                ci_upper: self.ci_upper[t],
            })
            .collect()
    }
}

/// Per-year factor `1 − η·change` applied to factual employment.
fn adjustment_factors(inp: &CounterfactualInputs, base: usize, eta: f64) -> Vec<f64> {
    let th = &inp.tightness;
    let change = |from: usize, to: usize| match inp.convention {
        ChangeConvention::LogChange => th[to].ln() - th[from].ln(),
        ChangeConvention::LevelChange => th[to] / th[from] - 1.0,
    };
    (0..th.len())
        .map(|t| {
            if t <= base {
                return 1.0;
            }
            match inp.path {
                CounterfactualPath::FromBase => 1.0 - eta * change(base, t),
                CounterfactualPath::Chained => ((base + 1)..=t).map(|s| 1.0 - eta * change(s - 1, s)).product(),
            }
        })
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Employment had tightness stayed at its base-year level, summed over
/// groups, with percentile intervals from draws of each group's elasticity.
pub fn counterfactual_employment(inp: &CounterfactualInputs) -> Result<CounterfactualResult, PolicyError> {
    let n = inp.years.len();
    if n == 0 || inp.tightness.len() != n || inp.groups.iter().any(|g| g.employment.len() != n) {
        return Err(PolicyError::Invalid("years, tightness and employment series must be aligned".into()));
    }
    if inp.groups.is_empty() {
        return Err(PolicyError::Invalid("no worker groups".into()));
    }
    if inp.tightness.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(PolicyError::Invalid("tightness must be positive".into()));
    }
    if inp.draws == 0 || !(inp.ci_level > 0.0 && inp.ci_level < 1.0) {
        return Err(PolicyError::Invalid("need at least one draw and a coverage level in (0, 1)".into()));
    }
    let base = inp
        .years
        .iter()
        .position(|&y| y == inp.base_year)
        .ok_or_else(|| PolicyError::Invalid(format!("base year {} not in the series", inp.base_year)))?;

    let groups: Vec<GroupPath> = inp
        .groups
        .iter()
        .map(|g| {
            let f = adjustment_factors(inp, base, g.eta_lt.value);
            GroupPath {
                name: g.name.clone(),
                factual: g.employment.clone(),
                counterfactual: g.employment.iter().zip(&f).map(|(e, k)| e * k).collect(),
            }
        })
        .collect();
    let total = |select: &dyn Fn(&GroupPath) -> &Vec<f64>| -> Vec<f64> {
        (0..n).map(|t| groups.iter().map(|g| select(g)[t]).sum()).collect()
    };
    let factual = total(&|g| &g.factual);
    let counterfactual = total(&|g| &g.counterfactual);

    let sims: Vec<Vec<f64>> = (0..inp.draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = draw_rng(inp.seed, k);
            let mut path = vec![0.0; n];
            for g in &inp.groups {
                let eta = g.eta_lt.value + g.eta_lt.se * std_normal(&mut rng);
                for (t, f) in adjustment_factors(inp, base, eta).into_iter().enumerate() {
                    path[t] += g.employment[t] * f;
                }
            }
            path
        })
        .collect();
    let alpha = (1.0 - inp.ci_level) / 2.0;
    let mut ci_lower = Vec::with_capacity(n);
    let mut ci_upper = Vec::with_capacity(n);
    for t in 0..n {
        let mut col: Vec<f64> = sims.iter().map(|p| p[t]).collect();
        col.sort_by(f64::total_cmp);
        ci_lower.push(quantile(&col, alpha));
        ci_upper.push(quantile(&col, 1.0 - alpha));
    }
    let last = n - 1;
    Ok(CounterfactualResult {
        gap: counterfactual[last] - factual[last],
        gap_ci: (ci_lower[last] - factual[last], ci_upper[last] - factual[last]),
        years: inp.years.clone(),
        factual,
        counterfactual,
        ci_lower,
        ci_upper,
        groups,
    })
}

/// Column names and fixed effects for the concession regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcessionSpec {
    pub wage: String,
    pub tightness: String,
    pub helper_share: String,
    pub z_w: String,
    pub z_v: String,
    pub z_u: String,
    pub fixed_effects: Vec<FixedEffect>,
    pub covariance: Covariance,
}

impl Default for ConcessionSpec {
    fn default() -> Self {
        Self {
            wage: "dln_wage".into(),
            tightness: "dln_theta".into(),
            helper_share: "d_helper_share".into(),
            z_w: "z_w".into(),
            z_v: "z_v".into(),
            z_u: "z_u".into(),
            fixed_effects: vec![FixedEffect::single("year")],
            covariance: Covariance::Cluster("unit".into()),
        }
    }
}

/// Wage growth on tightness growth (instrumented by the vacancy and
/// job-seeker instruments), and the change in the helper employment share
/// on wage and tightness growth (instrumented by all three).
pub fn concession_regressions(data: &Dataset, spec: &ConcessionSpec) -> Result<(EstimateReport, EstimateReport), PolicyError> {
    let with_fe = |mut s: RegressionSpec| {
        s.fixed_effects = spec.fixed_effects.clone();
        s.covariance = spec.covariance.clone();
        s
    };
    let wage = with_fe(
        RegressionSpec::new(spec.wage.clone(), &[spec.tightness.as_str()]).instruments(&[spec.z_v.as_str(), spec.z_u.as_str()]),
    );
    let skill = with_fe(
        RegressionSpec::new(spec.helper_share.clone(), &[spec.wage.as_str(), spec.tightness.as_str()])
            .instruments(&[spec.z_w.as_str(), spec.z_v.as_str(), spec.z_u.as_str()]),
    );
    Ok((tsls(&wage, data)?, tsls(&skill, data)?))
}
