//! First-difference panel regression engine.
//!
//! Estimation runs on a [`Dataset`] of named numeric columns plus named
//! categorical keys (firm, year, zone, ...). Fixed effects are absorbed by
//! within-demeaning, least squares uses Householder QR, and inference uses
//! homoskedastic, heteroskedasticity-robust or one-way cluster-robust
//! sandwich covariances.

mod absorb;
mod covariance;
mod feedback;
mod linalg;
mod panel;
mod regression;
mod rotemberg;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feedback::{feedback_regression, FeedbackOutcome, RegionPanel};
pub use panel::{first_difference, Differenced, LevelPanel};
pub use regression::{ols, reduced_form, tsls};
pub use rotemberg::{rotemberg, BartikComponent, RotembergEntry, RotembergReport, SignSummary, PeriodSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("column `{name}` has length {got}, expected {expected}")]
    LengthMismatch { name: String, got: usize, expected: usize },
    #[error("rank deficient design: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("too few observations: n = {n}, k = {k}")]
    TooFewObservations { n: usize, k: usize },
    #[error("under-identified: {instruments} excluded instruments for {endogenous} endogenous regressors")]
    UnderIdentified { instruments: usize, endogenous: usize },
    #[error("need at least two clusters, got {0}")]
    TooFewClusters(usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("{0}")]
    Invalid(String),
}

/// Column-oriented estimation data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    columns: BTreeMap<String, Vec<f64>>,
    keys: BTreeMap<String, Vec<u64>>,
}

impl Dataset {
    pub fn new(n: usize) -> Self {
        Self { n, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<(), EstimationError> {
        let name = name.into();
        if values.len() != self.n {
            return Err(EstimationError::LengthMismatch { name, got: values.len(), expected: self.n });
        }
        self.columns.insert(name, values);
        Ok(())
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self, EstimationError> {
        self.add_column(name, values)?;
        Ok(self)
    }

    pub fn add_key(&mut self, name: impl Into<String>, values: Vec<u64>) -> Result<(), EstimationError> {
        let name = name.into();
        if values.len() != self.n {
            return Err(EstimationError::LengthMismatch { name, got: values.len(), expected: self.n });
        }
        self.keys.insert(name, values);
        Ok(())
    }

    pub fn with_key(mut self, name: impl Into<String>, values: Vec<u64>) -> Result<Self, EstimationError> {
        self.add_key(name, values)?;
        Ok(self)
    }

    /// Encodes arbitrary labels as a key, numbering levels in sorted order.
    pub fn add_key_labels<T: Ord + Clone>(&mut self, name: impl Into<String>, labels: &[T]) -> Result<(), EstimationError> {
        let mut levels: Vec<T> = labels.to_vec();
        levels.sort();
        levels.dedup();
        let codes = labels
            .iter()
            .map(|l| levels.binary_search(l).expect("label present") as u64)
            .collect();
        self.add_key(name, codes)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], EstimationError> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| EstimationError::UnknownColumn(name.to_string()))
    }

    pub fn key(&self, name: &str) -> Result<&[u64], EstimationError> {
        self.keys
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| EstimationError::UnknownKey(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|s| s.as_str())
    }

    pub fn key_names(&self) -> impl Iterator<Item = &str> {
        self.keys.keys().map(|s| s.as_str())
    }

    /// Keeps rows where `mask` is true.
    pub fn filter(&self, mask: &[bool]) -> Dataset {
        let pick_f = |v: &Vec<f64>| v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect();
        let pick_k = |v: &Vec<u64>| v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect();
        Dataset {
            n: mask.iter().filter(|&&m| m).count(),
            columns: self.columns.iter().map(|(k, v)| (k.clone(), pick_f(v))).collect(),
            keys: self.keys.iter().map(|(k, v)| (k.clone(), pick_k(v))).collect(),
        }
    }

    /// Interaction of several keys as a single key (dense codes in order of
    /// first appearance).
    pub fn interact(&self, names: &[String]) -> Result<Vec<u64>, EstimationError> {
        let cols = names.iter().map(|n| self.key(n)).collect::<Result<Vec<_>, _>>()?;
        if cols.len() == 1 {
            return Ok(cols[0].to_vec());
        }
        let mut map: HashMap<Vec<u64>, u64> = HashMap::new();
        Ok((0..self.n)
            .map(|i| {
                let tuple: Vec<u64> = cols.iter().map(|c| c[i]).collect();
                let next = map.len() as u64;
                *map.entry(tuple).or_insert(next)
            })
            .collect())
    }
}

/// One fixed-effect dimension: a single key or an interaction of keys,
/// written `year` or `year*zone` in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FixedEffect(pub Vec<String>);

impl FixedEffect {
    pub fn single(key: impl Into<String>) -> Self {
        FixedEffect(vec![key.into()])
    }
}

impl TryFrom<String> for FixedEffect {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        let parts: Vec<String> = s.split(['*', '×']).map(|p| p.trim().to_string()).collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(format!("malformed fixed effect `{s}`"));
        }
        Ok(FixedEffect(parts))
    }
}

impl From<FixedEffect> for String {
    fn from(fe: FixedEffect) -> String {
        fe.0.join("*")
    }
}

impl fmt::Display for FixedEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join("×"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    Homoskedastic,
    /// Heteroskedasticity-robust (HC1 with the small-sample factor).
    #[default]
    Robust,
    /// One-way clustered on the named key.
    Cluster(String),
}

impl fmt::Display for Covariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Covariance::Homoskedastic => write!(f, "homoskedastic"),
            Covariance::Robust => write!(f, "robust"),
            Covariance::Cluster(k) => write!(f, "cluster({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub dependent: String,
    /// Regressors of interest; instrumented in [`tsls`], plain regressors in [`ols`].
    pub endogenous: Vec<String>,
    /// Included exogenous controls.
    #[serde(default)]
    pub exogenous: Vec<String>,
    /// Excluded instruments.
    #[serde(default)]
    pub instruments: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<FixedEffect>,
    #[serde(default)]
    pub covariance: Covariance,
    #[serde(default)]
    pub weights: Option<String>,
    /// Apply `(G/(G−1))·((N−1)/(N−K))` (cluster) or `N/(N−K)` (robust).
    #[serde(default = "yes")]
    pub small_sample: bool,
    /// Excluded-instrument F below which a weak-instrument warning is issued.
    #[serde(default = "default_weak_threshold")]
    pub weak_instrument_threshold: f64,
}

fn yes() -> bool {
    true
}

fn default_weak_threshold() -> f64 {
    10.0
}

impl RegressionSpec {
    pub fn new(dependent: impl Into<String>, endogenous: &[&str]) -> Self {
        Self {
            dependent: dependent.into(),
            endogenous: endogenous.iter().map(|s| s.to_string()).collect(),
            exogenous: Vec::new(),
            instruments: Vec::new(),
            fixed_effects: Vec::new(),
            covariance: Covariance::Robust,
            weights: None,
            small_sample: true,
            weak_instrument_threshold: default_weak_threshold(),
        }
    }

    pub fn instruments(mut self, z: &[&str]) -> Self {
        self.instruments = z.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn exogenous(mut self, x: &[&str]) -> Self {
        self.exogenous = x.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn fixed_effect(mut self, fe: FixedEffect) -> Self {
        self.fixed_effects.push(fe);
        self
    }

    pub fn cluster(mut self, key: impl Into<String>) -> Self {
        self.covariance = Covariance::Cluster(key.into());
        self
    }

    pub fn covariance(mut self, cov: Covariance) -> Self {
        self.covariance = cov;
        self
    }

    pub fn weights(mut self, column: impl Into<String>) -> Self {
        self.weights = Some(column.into());
        self
    }
}

/// Name used for the intercept when no fixed effect absorbs it.
pub const INTERCEPT: &str = "_cons";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub endogenous: String,
    pub coefficients: Vec<Coefficient>,
    /// Wald F statistic of the excluded instruments, using the report's covariance.
    pub excluded_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ols,
    Tsls,
    ReducedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: Estimator,
    pub dependent: String,
    pub coefficients: Vec<Coefficient>,
    /// Row-major covariance of `coefficients`.
    pub covariance: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub first_stages: Vec<FirstStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_form: Option<Vec<Coefficient>>,
    pub fixed_effects: Vec<String>,
    pub covariance_type: String,
    pub n_obs: usize,
    pub n_clusters: Option<usize>,
    pub n_dropped: usize,
    pub absorbed_levels: usize,
    pub df_resid: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.coefficient(name).map(|c| c.estimate)
    }

    pub fn first_stage_f(&self, endogenous: &str) -> Option<f64> {
        self.first_stages
            .iter()
            .find(|f| f.endogenous == endogenous)
            .map(|f| f.excluded_f)
    }
}

/// Renders several reports side by side: coefficient, standard error in
/// parentheses, then fixed effects, instruments, counts and first-stage F rows.
pub fn format_table(columns: &[(&str, &EstimateReport, &[String])]) -> String {
    let width = 16;
    let mut rows: Vec<String> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (_, rep, _) in columns {
        for c in &rep.coefficients {
            if !names.contains(&c.name) {
                names.push(c.name.clone());
            }
        }
    }
    let header: String = columns
        .iter()
        .enumerate()
        .map(|(i, (label, _, _))| format!("{:>width$}", format!("({}) {}", i + 1, label)))
        .collect();
    rows.push(format!("{:<18}{}", "", header));
    rows.push("-".repeat(18 + width * columns.len()));
    for name in &names {
        let mut est = format!("{:<18}", name);
        let mut se = format!("{:<18}", "");
        for (_, rep, _) in columns {
            match rep.coefficient(name) {
                Some(c) => {
                    est.push_str(&format!("{:>width$.3}", c.estimate));
                    se.push_str(&format!("{:>width$}", format!("({:.3})", c.std_error)));
                }
                None => {
                    est.push_str(&" ".repeat(width));
                    se.push_str(&" ".repeat(width));
                }
            }
        }
        rows.push(est);
        rows.push(se);
    }
    rows.push("-".repeat(18 + width * columns.len()));
    let line = |label: &str, f: &dyn Fn(&EstimateReport, &[String]) -> String| {
        let mut s = format!("{:<18}", label);
        for (_, rep, inst) in columns {
            s.push_str(&format!("{:>width$}", f(rep, inst)));
        }
        s
    };
    rows.push(line("Fixed Effects", &|r, _| {
        if r.fixed_effects.is_empty() {
            "None".into()
        } else {
            r.fixed_effects.join(",")
        }
    }));
    rows.push(line("Instruments", &|_, z| if z.is_empty() { "None".into() } else { z.join(",") }));
    rows.push(line("Observations", &|r, _| r.n_obs.to_string()));
    rows.push(line("Clusters", &|r, _| r.n_clusters.map(|g| g.to_string()).unwrap_or_default()));
    let mut endog: Vec<String> = Vec::new();
    for (_, rep, _) in columns {
        for fs in &rep.first_stages {
            if !endog.contains(&fs.endogenous) {
                endog.push(fs.endogenous.clone());
            }
        }
    }
    for e in &endog {
        rows.push(line(&format!("F: {e}"), &|r, _| {
            r.first_stage_f(e).map(|f| format!("{f:.1}")).unwrap_or_default()
        }));
    }
    rows.join("\n") + "\n"
}
