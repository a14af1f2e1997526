use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::absorb::{absorb, absorbed_dof, Groups};
use super::covariance::{sandwich, CovarianceInput};
use super::linalg::{wald_inverse, LeastSquares};
use super::{
    Coefficient, Covariance, Dataset, EstimateReport, EstimationError, Estimator, FirstStage, RegressionSpec, INTERCEPT,
};

/// Design matrices after row selection, fixed-effect absorption and weighting.
pub(super) struct Prepared {
    pub(super) y: DMatrix<f64>,
    pub(super) endog: DMatrix<f64>,
    pub(super) exog: DMatrix<f64>,
    pub(super) instr: DMatrix<f64>,
    pub(super) endog_names: Vec<String>,
    pub(super) exog_names: Vec<String>,
    pub(super) instr_names: Vec<String>,
    pub(super) clusters: Option<Vec<usize>>,
    pub(super) n_clusters: usize,
    pub(super) absorbed: usize,
    pub(super) n_dropped: usize,
    pub(super) fe_labels: Vec<String>,
}

impl Prepared {
    pub(super) fn n(&self) -> usize {
        self.y.nrows()
    }

    pub(super) fn cov_input<'a>(&'a self, spec: &'a RegressionSpec, k: usize) -> CovarianceInput<'a> {
        CovarianceInput {
            kind: &spec.covariance,
            clusters: self.clusters.as_deref(),
            n_clusters: self.n_clusters,
            k_total: k + self.absorbed,
            small_sample: spec.small_sample,
        }
    }
}

pub(super) fn hcat(parts: &[&DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let k: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(n, k);
    let mut at = 0;
    for p in parts {
        out.columns_mut(at, p.ncols()).copy_from(p);
        at += p.ncols();
    }
    out
}

pub(super) fn prepare(spec: &RegressionSpec, data: &Dataset, instruments: &[String]) -> Result<Prepared, EstimationError> {
    let mut numeric: Vec<&str> = vec![spec.dependent.as_str()];
    numeric.extend(spec.endogenous.iter().map(|s| s.as_str()));
    numeric.extend(spec.exogenous.iter().map(|s| s.as_str()));
    numeric.extend(instruments.iter().map(|s| s.as_str()));
    let cols = numeric.iter().map(|n| data.column(n)).collect::<Result<Vec<_>, _>>()?;
    let weights = match &spec.weights {
        Some(w) => {
            let col = data.column(w)?;
            if let Some(bad) = col.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(EstimationError::InvalidWeights(format!("weight {bad} in `{w}`")));
            }
            Some(col)
        }
        None => None,
    };
    let fe_keys = spec
        .fixed_effects
        .iter()
        .map(|fe| data.interact(&fe.0))
        .collect::<Result<Vec<_>, _>>()?;
    let cluster_key = match &spec.covariance {
        Covariance::Cluster(k) => Some(data.key(k)?),
        _ => None,
    };

    let mask: Vec<bool> = (0..data.len())
        .map(|i| cols.iter().all(|c| c[i].is_finite()) && weights.is_none_or(|w| w[i] > 0.0))
        .collect();
    let rows: Vec<usize> = (0..data.len()).filter(|&i| mask[i]).collect();
    let n = rows.len();
    let n_dropped = data.len() - n;

    let dims: Vec<Groups> = fe_keys
        .iter()
        .map(|k| Groups::from_keys(&rows.iter().map(|&i| k[i]).collect::<Vec<_>>()))
        .collect();
    let w: Vec<f64> = rows.iter().map(|&i| weights.map_or(1.0, |w| w[i])).collect();

    let mut all = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][rows[r]]);
    absorb(&mut all, &dims, &w);
    let intercept = dims.is_empty();
    if intercept {
        all = all.insert_column(1 + spec.endogenous.len() + spec.exogenous.len(), 1.0);
    }
    for (r, wi) in w.iter().enumerate() {
        if *wi != 1.0 {
            let s = wi.sqrt();
            all.row_mut(r).scale_mut(s);
        }
    }

    let k1 = spec.endogenous.len();
    let k2 = spec.exogenous.len() + usize::from(intercept);
    let l1 = instruments.len();
    let mut exog_names = spec.exogenous.clone();
    if intercept {
        exog_names.push(INTERCEPT.to_string());
    }

    let (clusters, n_clusters) = match cluster_key {
        Some(key) => {
            let mut map: HashMap<u64, usize> = HashMap::new();
            let codes: Vec<usize> = rows
                .iter()
                .map(|&i| {
                    let next = map.len();
                    *map.entry(key[i]).or_insert(next)
                })
                .collect();
            let g = map.len();
            (Some(codes), g)
        }
        None => (None, 0),
    };

    Ok(Prepared {
        y: all.columns(0, 1).into_owned(),
        endog: all.columns(1, k1).into_owned(),
        exog: all.columns(1 + k1, k2).into_owned(),
        instr: all.columns(1 + k1 + k2, l1).into_owned(),
        endog_names: spec.endogenous.clone(),
        exog_names,
        instr_names: instruments.to_vec(),
        clusters,
        n_clusters,
        absorbed: absorbed_dof(&dims),
        n_dropped,
        fe_labels: spec.fixed_effects.iter().map(|f| f.to_string()).collect(),
    })
}

fn coefficients(names: &[String], beta: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<Coefficient> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name: name.clone(),
            estimate: beta[j],
            std_error: cov[(j, j)].max(0.0).sqrt(),
        })
        .collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

struct OlsFit {
    beta: DVector<f64>,
    cov: DMatrix<f64>,
}

fn ols_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
    cov_in: &CovarianceInput<'_>,
) -> Result<OlsFit, EstimationError> {
    let ls = LeastSquares::solve(x, &DMatrix::from_column_slice(y.len(), 1, y.as_slice()), names)?;
    let beta = ls.column(0);
    let resid = y - x * &beta;
    let cov = sandwich(&ls.xtx_inverse(), x, &resid, cov_in)?;
    Ok(OlsFit { beta, cov })
}

pub(super) fn wald_f(beta: &DVector<f64>, cov: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let q = idx.len();
    if q == 0 {
        return 0.0;
    }
    let b = DVector::from_iterator(q, idx.iter().map(|&i| beta[i]));
    let v = DMatrix::from_fn(q, q, |r, c| cov[(idx[r], idx[c])]);
    let stat = (b.transpose() * wald_inverse(&v) * &b)[(0, 0)] / q as f64;
    stat.max(0.0)
}

fn base_report(estimator: Estimator, spec: &RegressionSpec, p: &Prepared, k: usize) -> EstimateReport {
    EstimateReport {
        estimator,
        dependent: spec.dependent.clone(),
        coefficients: Vec::new(),
        covariance: Vec::new(),
        first_stages: Vec::new(),
        reduced_form: None,
        fixed_effects: p.fe_labels.clone(),
        covariance_type: spec.covariance.to_string(),
        n_obs: p.n(),
        n_clusters: p.clusters.as_ref().map(|_| p.n_clusters),
        n_dropped: p.n_dropped,
        absorbed_levels: p.absorbed,
        df_resid: p.n().saturating_sub(k + p.absorbed),
        warnings: Vec::new(),
    }
}

/// Least squares of the dependent variable on `endogenous ++ exogenous`
/// (plus an intercept when no fixed effect is absorbed).
pub fn ols(spec: &RegressionSpec, data: &Dataset) -> Result<EstimateReport, EstimationError> {
    let p = prepare(spec, data, &[])?;
    let x = hcat(&[&p.endog, &p.exog], p.n());
    let names: Vec<String> = p.endog_names.iter().chain(&p.exog_names).cloned().collect();
    let fit = ols_fit(&x, &p.y.column(0).into_owned(), &names, &p.cov_input(spec, x.ncols()))?;
    let mut rep = base_report(Estimator::Ols, spec, &p, x.ncols());
    rep.coefficients = coefficients(&names, &fit.beta, &fit.cov);
    rep.covariance = to_rows(&fit.cov);
    Ok(rep)
}

/// Least squares of the outcome directly on the excluded instruments and
/// exogenous controls.
pub fn reduced_form(spec: &RegressionSpec, data: &Dataset) -> Result<EstimateReport, EstimationError> {
    if spec.instruments.is_empty() {
        return Err(EstimationError::UnderIdentified { instruments: 0, endogenous: spec.endogenous.len() });
    }
    let rf_spec = RegressionSpec { endogenous: Vec::new(), ..spec.clone() };
    let p = prepare(&rf_spec, data, &spec.instruments)?;
    let z = hcat(&[&p.instr, &p.exog], p.n());
    let names: Vec<String> = p.instr_names.iter().chain(&p.exog_names).cloned().collect();
    let fit = ols_fit(&z, &p.y.column(0).into_owned(), &names, &p.cov_input(spec, z.ncols()))?;
    let mut rep = base_report(Estimator::ReducedForm, spec, &p, z.ncols());
    rep.coefficients = coefficients(&names, &fit.beta, &fit.cov);
    rep.covariance = to_rows(&fit.cov);
    Ok(rep)
}

/// Two-stage least squares.
///
/// Endogenous regressors are projected on `instruments ++ exogenous`; the
/// outcome is regressed on the fitted values, and the covariance is the 2SLS
/// sandwich built from structural residuals `y − X·β` and the fitted design.
/// The report also carries each first stage with its excluded-instrument F
/// and the reduced form.
pub fn tsls(spec: &RegressionSpec, data: &Dataset) -> Result<EstimateReport, EstimationError> {
    let k1 = spec.endogenous.len();
    let l1 = spec.instruments.len();
    if k1 == 0 || l1 < k1 {
        return Err(EstimationError::UnderIdentified { instruments: l1, endogenous: k1 });
    }
    let p = prepare(spec, data, &spec.instruments)?;
    let n = p.n();
    let z = hcat(&[&p.instr, &p.exog], n);
    let z_names: Vec<String> = p.instr_names.iter().chain(&p.exog_names).cloned().collect();

    let first = LeastSquares::solve(&z, &p.endog, &z_names)?;
    let fitted_endog = &z * &first.coef;
    let x_hat = hcat(&[&fitted_endog, &p.exog], n);
    let x = hcat(&[&p.endog, &p.exog], n);
    let names: Vec<String> = p.endog_names.iter().chain(&p.exog_names).cloned().collect();

    let y = p.y.column(0).into_owned();
    let second = LeastSquares::solve(&x_hat, &p.y, &names).map_err(|e| match e {
        EstimationError::RankDeficient { .. } => EstimationError::UnderIdentified { instruments: l1, endogenous: k1 },
        other => other,
    })?;
    let beta = second.column(0);
    let resid = &y - &x * &beta;
    let cov = sandwich(&second.xtx_inverse(), &x_hat, &resid, &p.cov_input(spec, x.ncols()))?;

    let mut rep = base_report(Estimator::Tsls, spec, &p, x.ncols());
    rep.coefficients = coefficients(&names, &beta, &cov);
    rep.covariance = to_rows(&cov);

    let z_bread = first.xtx_inverse();
    let excluded: Vec<usize> = (0..l1).collect();
    for (j, endog_name) in p.endog_names.iter().enumerate() {
        let gamma = first.column(j);
        let v = p.endog.column(j) - &z * &gamma;
        let fs_cov = sandwich(&z_bread, &z, &v, &p.cov_input(spec, z.ncols()))?;
        let f = wald_f(&gamma, &fs_cov, &excluded);
        if f < spec.weak_instrument_threshold {
            let msg = format!(
                "weak instruments for `{endog_name}`: excluded-instrument F = {f:.2} < {}",
                spec.weak_instrument_threshold
            );
            warn!("{msg}");
            rep.warnings.push(msg);
        }
        rep.first_stages.push(FirstStage {
            endogenous: endog_name.clone(),
            coefficients: coefficients(&z_names, &gamma, &fs_cov),
            excluded_f: f,
        });
    }

    let rf = LeastSquares::solve(&z, &p.y, &z_names)?;
    let rf_beta = rf.column(0);
    let rf_resid = &y - &z * &rf_beta;
    let rf_cov = sandwich(&z_bread, &z, &rf_resid, &p.cov_input(spec, z.ncols()))?;
    rep.reduced_form = Some(coefficients(&z_names, &rf_beta, &rf_cov));
    Ok(rep)
}
