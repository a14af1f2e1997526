use serde::{Deserialize, Serialize};

use super::panel::{first_difference, LevelPanel};
use super::{EstimateReport, EstimationError, FixedEffect, RegressionSpec};
use super::regression::tsls;

/// Region-year stocks for the tightness feedback regression.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionPanel {
    pub region: Vec<u64>,
    pub year: Vec<i32>,
    pub employment: Vec<f64>,
    pub vacancies: Vec<f64>,
    pub job_seekers: Vec<f64>,
    /// Regional shift-share exposure, already a one-year log-growth predictor.
    pub exposure: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackOutcome {
    /// `Δln θ`: the slope estimates ν.
    #[default]
    Tightness,
    /// `Δln U`: the slope estimates `dln U / dln L`.
    JobSeekers,
}

/// IV regression of one-year log changes in regional tightness (or job
/// seekers) on log employment changes, instrumented by the regional
/// exposure, with year effects and standard errors clustered by region.
pub fn feedback_regression(panel: &RegionPanel, outcome: FeedbackOutcome) -> Result<EstimateReport, EstimationError> {
    let mut regions = panel.region.clone();
    regions.sort_unstable();
    regions.dedup();
    if regions.len() < 2 {
        return Err(EstimationError::Invalid(format!(
            "feedback regression needs at least two regions, got {}",
            regions.len()
        )));
    }
    let theta: Vec<f64> = panel
        .vacancies
        .iter()
        .zip(&panel.job_seekers)
        .map(|(v, u)| if *u > 0.0 { v / u } else { f64::NAN })
        .collect();
    let lp = LevelPanel::new(panel.region.clone(), panel.year.clone())?
        .log_var("employment", panel.employment.clone())?
        .log_var("job_seekers", panel.job_seekers.clone())?
        .log_var("theta", theta)?
        .carry("exposure", panel.exposure.clone())?
        .carry_key("region", panel.region.clone())?;
    let diff = first_difference(&lp, 1)?;
    let dependent = match outcome {
        FeedbackOutcome::Tightness => "dln_theta",
        FeedbackOutcome::JobSeekers => "dln_job_seekers",
    };
    let spec = RegressionSpec::new(dependent, &["dln_employment"])
        .instruments(&["exposure"])
        .fixed_effect(FixedEffect::single("year"))
        .cluster("region");
    let mut rep = tsls(&spec, &diff.data)?;
    rep.n_dropped += diff.dropped;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_region_rejected() {
        let p = RegionPanel {
            region: vec![1, 1],
            year: vec![2000, 2001],
            employment: vec![1.0, 2.0],
            vacancies: vec![1.0, 1.0],
            job_seekers: vec![1.0, 1.0],
            exposure: vec![0.0, 0.1],
        };
        assert!(matches!(
            feedback_regression(&p, FeedbackOutcome::Tightness),
            Err(EstimationError::Invalid(_))
        ));
    }
}
