//! Rotemberg-weight decomposition of a shift-share IV estimate.
//!
//! With components `z_k` (a base-year share interacted with a period
//! indicator) and shifts `g_k`, the aggregate instrument is `B = Σ g_k z_k`.
//! After partialling out fixed effects and controls, the just-identified IV
//! estimate using `B` decomposes exactly as `Σ α_k β_k` with
//! `α_k = g_k z̃_k'x̃ / Σ_j g_j z̃_j'x̃` and `β_k = z̃_k'ỹ / z̃_k'x̃`.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::sandwich;
use super::linalg::LeastSquares;
use super::regression::{hcat, prepare, tsls};
use super::{Dataset, EstimationError, RegressionSpec};

/// One share-times-period instrument column with its national shift.
#[derive(Debug, Clone)]
pub struct BartikComponent {
    pub label: String,
    pub period: i32,
    pub growth: f64,
    /// `s_io · 1{t = period}`, one value per dataset row.
    pub exposure: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotembergEntry {
    pub label: String,
    pub period: i32,
    pub growth: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub first_stage_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSummary {
    pub sign: String,
    pub count: usize,
    pub sum_alpha: f64,
    pub mean_alpha: f64,
    /// Share of total absolute weight.
    pub share: f64,
    /// `Σ α β / Σ α` within the group.
    pub weighted_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub period: i32,
    pub sum_alpha: f64,
    pub weighted_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotembergReport {
    pub dependent: String,
    pub endogenous: String,
    pub n_obs: usize,
    /// Entries sorted by descending weight; missing weights last.
    pub entries: Vec<RotembergEntry>,
    pub sum_alpha: f64,
    /// `Σ α_k β_k` over components with a defined estimate.
    pub decomposition_estimate: f64,
    /// IV estimate with the aggregate instrument, computed directly.
    pub bartik_estimate: f64,
    pub by_sign: Vec<SignSummary>,
    pub by_period: Vec<PeriodSummary>,
    pub warnings: Vec<String>,
}

impl RotembergReport {
    /// `|Σ α β − bartik| / max(|bartik|, 1e-300)`.
    pub fn identity_gap(&self) -> f64 {
        (self.decomposition_estimate - self.bartik_estimate).abs() / self.bartik_estimate.abs().max(1e-300)
    }
}

const ZERO_DENOM_TOL: f64 = 1e-12;

/// Decomposes the aggregate-instrument IV estimate of `spec` (exactly one
/// endogenous regressor; `spec.instruments` is ignored) into per-component
/// weights and just-identified estimates.
pub fn rotemberg(
    spec: &RegressionSpec,
    data: &Dataset,
    components: &[BartikComponent],
) -> Result<RotembergReport, EstimationError> {
    if spec.endogenous.len() != 1 {
        return Err(EstimationError::Invalid(format!(
            "Rotemberg decomposition needs exactly one endogenous regressor, got {}",
            spec.endogenous.len()
        )));
    }
    if components.is_empty() {
        return Err(EstimationError::UnderIdentified { instruments: 0, endogenous: 1 });
    }
    let mut augmented = data.clone();
    let mut names = Vec::with_capacity(components.len());
    for (k, c) in components.iter().enumerate() {
        let name = format!("__rotemberg_{k}");
        augmented.add_column(name.clone(), c.exposure.clone())?;
        names.push(name);
    }
    let bartik: Vec<f64> = (0..data.len())
        .map(|i| components.iter().map(|c| c.growth * c.exposure[i]).sum())
        .collect();
    augmented.add_column("__rotemberg_bartik", bartik)?;

    let base_spec = RegressionSpec { instruments: Vec::new(), ..spec.clone() };
    let p = prepare(&base_spec, &augmented, &names)?;
    let n = p.n();
    // Partial out included controls (and the intercept) from y, x and every z_k.
    let rhs = hcat(&[&p.y, &p.endog, &p.instr], n);
    let resid = if p.exog.ncols() > 0 {
        let ls = LeastSquares::solve(&p.exog, &rhs, &p.exog_names)?;
        &rhs - &p.exog * &ls.coef
    } else {
        rhs
    };
    let y = resid.column(0).into_owned();
    let x = resid.column(1).into_owned();
    let k_exog = p.exog.ncols();

    let mut warnings = Vec::new();
    let mut numer = Vec::with_capacity(components.len());
    let mut denom = Vec::with_capacity(components.len());
    let mut fstats = Vec::with_capacity(components.len());
    for k in 0..components.len() {
        let z: DVector<f64> = resid.column(2 + k).into_owned();
        let zz = z.dot(&z);
        let zx = z.dot(&x);
        numer.push(z.dot(&y));
        denom.push(zx);
        let f = if zz > 0.0 {
            let gamma = zx / zz;
            let v = &x - &z * gamma;
            let zm = DMatrix::from_column_slice(n, 1, z.as_slice());
            let bread = DMatrix::from_element(1, 1, 1.0 / zz);
            let cov = sandwich(&bread, &zm, &v, &p.cov_input(spec, 1 + k_exog))?;
            (cov[(0, 0)] > 0.0).then(|| gamma * gamma / cov[(0, 0)])
        } else {
            None
        };
        fstats.push(f);
    }

    let total: f64 = components.iter().zip(&denom).map(|(c, d)| c.growth * d).sum();
    if total.abs() <= ZERO_DENOM_TOL * denom.iter().fold(0.0_f64, |a, d| a.max(d.abs())).max(1e-300) {
        return Err(EstimationError::Invalid(
            "aggregate instrument is uncorrelated with the endogenous regressor".into(),
        ));
    }
    let scale = x.norm() * resid.columns(2, components.len()).column_iter().fold(0.0_f64, |a, c| a.max(c.norm()));

    let mut entries = Vec::with_capacity(components.len());
    for (k, c) in components.iter().enumerate() {
        let defined = denom[k].abs() > ZERO_DENOM_TOL * scale.max(1e-300);
        if !defined {
            let msg = format!(
                "component {} ({}) has no first-stage covariation; weight reported as missing",
                c.label, c.period
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        entries.push(RotembergEntry {
            label: c.label.clone(),
            period: c.period,
            growth: c.growth,
            alpha: defined.then(|| c.growth * denom[k] / total),
            beta: defined.then(|| numer[k] / denom[k]),
            first_stage_f: fstats[k],
        });
    }

    let sum_alpha: f64 = entries.iter().filter_map(|e| e.alpha).sum();
    let decomposition_estimate: f64 = entries.iter().filter_map(|e| Some(e.alpha? * e.beta?)).sum();

    let iv_spec = RegressionSpec { instruments: vec!["__rotemberg_bartik".into()], ..spec.clone() };
    let direct = tsls(&iv_spec, &augmented)?;
    let bartik_estimate = direct.coefficients[0].estimate;

    let by_sign = ["positive", "negative"]
        .iter()
        .map(|&sign| {
            let group: Vec<&RotembergEntry> = entries
                .iter()
                .filter(|e| e.alpha.is_some_and(|a| if sign == "positive" { a >= 0.0 } else { a < 0.0 }))
                .collect();
            summarize_sign(sign, &group, &entries)
        })
        .collect();

    let mut periods: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for e in &entries {
        if let (Some(a), Some(b)) = (e.alpha, e.beta) {
            let slot = periods.entry(e.period).or_default();
            slot.0 += a;
            slot.1 += a * b;
        }
    }
    let by_period = periods
        .into_iter()
        .map(|(period, (sa, sab))| PeriodSummary {
            period,
            sum_alpha: sa,
            weighted_beta: (sa != 0.0).then(|| sab / sa),
        })
        .collect();

    entries.sort_by(|a, b| match (a.alpha, b.alpha) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    Ok(RotembergReport {
        dependent: spec.dependent.clone(),
        endogenous: spec.endogenous[0].clone(),
        n_obs: n,
        entries,
        sum_alpha,
        decomposition_estimate,
        bartik_estimate,
        by_sign,
        by_period,
        warnings,
    })
}

fn summarize_sign(sign: &str, group: &[&RotembergEntry], all: &[RotembergEntry]) -> SignSummary {
    let abs_total: f64 = all.iter().filter_map(|e| e.alpha).map(f64::abs).sum();
    let sum_alpha: f64 = group.iter().filter_map(|e| e.alpha).sum();
    let sum_ab: f64 = group.iter().filter_map(|e| Some(e.alpha? * e.beta?)).sum();
    SignSummary {
        sign: sign.to_string(),
        count: group.len(),
        sum_alpha,
        mean_alpha: if group.is_empty() { 0.0 } else { sum_alpha / group.len() as f64 },
        share: if abs_total > 0.0 { sum_alpha.abs() / abs_total } else { 0.0 },
        weighted_beta: (sum_alpha != 0.0).then(|| sum_ab / sum_alpha),
    }
}
