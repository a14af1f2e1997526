//! Stage glue: raw tables to tightness, instruments and the differenced
//! estimation dataset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{first_difference, ols, tsls, Dataset, EstimateReport, EstimationError, LevelPanel, RegressionSpec};
use crate::io::{
    AdjustedMarketRecord, EstimateSettings, FirmRecord, FirmTightnessRecord, InstrumentRecord, MarketRecord,
    NotificationShareRecord, OccupationEmploymentRecord, PipelineConfig, TightnessSettings, TransitionRecord,
};
use crate::market_sim::{SimError, SyntheticPanel};
use crate::shift_share::{firm_instruments, BaseYearRule, InstrumentSet, InstrumentSettings, ShiftShareError};
use crate::tightness::{adjust_markets, firm_tightness_panel, flow_weights, MarketAdjustment, NotificationShares, TightnessError, TransitionMatrix};

pub const DEPENDENT: &str = "dln_employment";
pub const WAGE: &str = "dln_wage";
pub const TIGHTNESS: &str = "dln_theta";
pub const INSTRUMENTS: [&str; 3] = ["z_w", "z_v", "z_u"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Tightness(#[from] TightnessError),
    #[error(transparent)]
    ShiftShare(#[from] ShiftShareError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("{0}")]
    Config(String),
    #[error("missing input table `{0}`")]
    MissingInput(&'static str),
}

/// Auxiliary tables used to adjust market stocks.
#[derive(Debug, Clone, Copy, Default)]
pub struct MarketInputs<'a> {
    pub notification_shares: Option<&'a [NotificationShareRecord]>,
    pub transitions: Option<&'a [TransitionRecord]>,
    pub occupation_employment: Option<&'a [OccupationEmploymentRecord]>,
    pub zones: Option<&'a BTreeMap<u64, u64>>,
}

/// Adjusted market cells according to `settings`.
pub fn build_markets(
    markets: &[MarketRecord],
    inputs: &MarketInputs<'_>,
    settings: &TightnessSettings,
) -> Result<Vec<AdjustedMarketRecord>, PipelineError> {
    let shares = if settings.notification {
        let records = inputs.notification_shares.ok_or(PipelineError::MissingInput("notification_shares"))?;
        Some(NotificationShares::from_records(records)?)
    } else {
        None
    };
    let weights = if settings.flow_adjustment {
        let tr = inputs.transitions.ok_or(PipelineError::MissingInput("transitions"))?;
        let emp = inputs.occupation_employment.ok_or(PipelineError::MissingInput("occupation_employment"))?;
        Some(flow_weights(&TransitionMatrix::from_records(tr, emp)?, settings.weight_warn_above)?)
    } else {
        None
    };
    let adj = MarketAdjustment { notification: shares.as_ref(), flows: weights.as_ref(), zones: inputs.zones };
    Ok(adjust_markets(markets, &adj)?)
}

pub fn build_firm_tightness(
    firms: &[FirmRecord],
    markets: &[AdjustedMarketRecord],
    zones: Option<&BTreeMap<u64, u64>>,
) -> Result<Vec<FirmTightnessRecord>, PipelineError> {
    Ok(firm_tightness_panel(firms, markets, zones)?)
}

/// Instruments with shares from `base_year` and estimation starting `lag`
/// years later.
pub fn build_instruments(
    firms: &[FirmRecord],
    markets: &[AdjustedMarketRecord],
    base_year: i32,
    settings: &InstrumentSettings,
) -> Result<InstrumentSet, PipelineError> {
    let rule = BaseYearRule { base_year, estimation_start: base_year + settings.lag.max(1) };
    Ok(firm_instruments(firms, markets, &rule, settings)?)
}

/// Differenced firm panel with columns `dln_employment`, `dln_wage`,
/// `dln_theta`, `z_w`, `z_v`, `z_u` and keys `unit`, `year`, `region`
/// (plus `zone` when given). Firm-years lacking tightness or instruments
/// keep NaN entries and are dropped at estimation.
pub fn estimation_dataset(
    firm_tightness: &[FirmTightnessRecord],
    instruments: &[InstrumentRecord],
    zones: Option<&BTreeMap<u64, u64>>,
    lag: i32,
) -> Result<Dataset, PipelineError> {
    let z: BTreeMap<(u64, i32), &InstrumentRecord> = instruments.iter().map(|r| ((r.firm_id, r.year), r)).collect();
    let n = firm_tightness.len();
    let mut cols: [Vec<f64>; 3] = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for r in firm_tightness {
        let rec = z.get(&(r.firm_id, r.year));
        let get = |f: fn(&InstrumentRecord) -> Option<f64>| rec.and_then(|x| f(x)).unwrap_or(f64::NAN);
        cols[0].push(get(|x| x.z_w));
        cols[1].push(get(|x| x.z_v));
        cols[2].push(get(|x| x.z_u));
    }
    let regions: Vec<u64> = firm_tightness.iter().map(|r| r.region).collect();
    let [zw, zv, zu] = cols;
    let mut panel = LevelPanel::new(
        firm_tightness.iter().map(|r| r.firm_id).collect(),
        firm_tightness.iter().map(|r| r.year).collect(),
    )?
    .log_var("employment", firm_tightness.iter().map(|r| r.employment).collect())?
    .log_var("wage", firm_tightness.iter().map(|r| r.wage).collect())?
    .log_var("theta", firm_tightness.iter().map(|r| r.tightness.unwrap_or(f64::NAN)).collect())?
    .carry("z_w", zw)?
    .carry("z_v", zv)?
    .carry("z_u", zu)?;
    if let Some(zmap) = zones {
        let zone = regions
            .iter()
            .map(|r| zmap.get(r).copied().ok_or(TightnessError::UnassignedRegion(*r)))
            .collect::<Result<Vec<_>, _>>()?;
        panel = panel.carry_key("zone", zone)?;
    }
    panel = panel.carry_key("region", regions)?;
    Ok(first_difference(&panel, lag)?.data)
}

/// Employment growth on wage and tightness growth, instrumented by the
/// three shift-share instruments.
pub fn elasticity_spec(settings: &EstimateSettings) -> Result<RegressionSpec, PipelineError> {
    let spec = RegressionSpec::new(DEPENDENT, &[WAGE, TIGHTNESS]).instruments(&INSTRUMENTS);
    settings.apply(spec).map_err(|e| PipelineError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityEstimates {
    pub tsls: EstimateReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ols: Option<EstimateReport>,
}

pub fn estimate_elasticities(data: &Dataset, settings: &EstimateSettings) -> Result<ElasticityEstimates, PipelineError> {
    let spec = elasticity_spec(settings)?;
    let iv = tsls(&spec, data)?;
    let ls = if settings.report_ols {
        let mut s = spec.clone();
        s.instruments.clear();
        Some(ols(&s, data)?)
    } else {
        None
    };
    Ok(ElasticityEstimates { tsls: iv, ols: ls })
}

/// Intermediate tables of a full run on one synthetic economy.
#[derive(Debug, Clone)]
pub struct PanelRun {
    pub markets: Vec<AdjustedMarketRecord>,
    pub firm_tightness: Vec<FirmTightnessRecord>,
    pub instruments: InstrumentSet,
    pub data: Dataset,
    pub estimates: ElasticityEstimates,
}

/// Tightness, instruments and estimation on a simulated panel.
pub fn run_synthetic(panel: &SyntheticPanel, cfg: &PipelineConfig) -> Result<PanelRun, PipelineError> {
    let inputs = MarketInputs {
        notification_shares: Some(&panel.notification_shares),
        transitions: Some(&panel.transitions),
        occupation_employment: Some(&panel.occupation_employment),
        zones: None,
    };
    let markets = build_markets(&panel.markets, &inputs, &cfg.tightness)?;
    let firm_tightness = build_firm_tightness(&panel.firms, &markets, None)?;
    let settings = InstrumentSettings {
        lag: cfg.instruments.lag,
        wage_weighting: cfg.instruments.wage_weighting,
        missing_cap: cfg.instruments.missing_cap,
    };
    let instruments = build_instruments(&panel.firms, &markets, panel.config.base_year, &settings)?;
    let data = estimation_dataset(&firm_tightness, &instruments.records, None, cfg.estimate.lag)?;
    let estimates = estimate_elasticities(&data, &cfg.estimate)?;
    Ok(PanelRun { markets, firm_tightness, instruments, data, estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_sim::{simulate_economy, EconomyConfig};

    #[test]
    fn small_economy_runs_end_to_end() {
        let cfg = PipelineConfig {
            simulate: EconomyConfig { n_firms: 300, n_occupations: 12, n_regions: 5, ..Default::default() },
            ..Default::default()
        };
        let panel = simulate_economy(&cfg.simulate).unwrap();
        let run = run_synthetic(&panel, &cfg).unwrap();
        assert_eq!(run.estimates.tsls.n_obs, 300 * 6);
        assert!(run.estimates.tsls.estimate(WAGE).unwrap().is_finite());
        assert!(run.data.key("region").is_ok());
    }
}
