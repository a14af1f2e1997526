//! Closed-form structural model of labor demand with hiring frictions.
//!
//! Unit labor cost is the wage plus amortized pre-match and post-match hiring
//! cost, `W* = W + (δ + r)·(c·W^φ1·θ^φ2 + Ψ)`. The wage and tightness
//! elasticities of labor demand are the elasticity of `W*` with respect to the
//! input times the standard substitution-plus-scale response to unit labor
//! cost, `−(1 − s_L)·σ − s_L·η`.
//!
//! The price elasticity of product demand is stored as a nonnegative
//! magnitude; every formula below uses it with an explicit minus sign.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Days per year used when annualizing daily hazard rates.
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("non-finite result in {0}: exponents out of representable range")]
    Domain(&'static str),
    #[error(
        "calibration infeasible: (δ+r)·(φ2·η_W/η_θ − φ1) = {denominator} is {}",
        if *denominator < 0.0 { "negative" } else { "zero" }
    )]
    CalibrationInfeasible { denominator: f64 },
    #[error("feedback cycle diverges: |ω| = |ν·η_θ| = {omega_abs} ≥ 1")]
    DivergentFeedback { omega_abs: f64 },
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value, reason })
    }
}

/// Technology side: substitution elasticity, product-demand elasticity and
/// labor share in total cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechnologyParams {
    pub sigma: f64,
    pub eta_yp: f64,
    pub s_l: f64,
}

impl TechnologyParams {
    pub fn new(sigma: f64, eta_yp: f64, s_l: f64) -> Result<Self, ModelError> {
        let p = Self { sigma, eta_yp, s_l };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check("sigma", self.sigma, self.sigma >= 0.0, "must be ≥ 0")?;
        check("eta_yp", self.eta_yp, self.eta_yp >= 0.0, "must be ≥ 0 (magnitude)")?;
        check("s_l", self.s_l, self.s_l > 0.0 && self.s_l < 1.0, "must lie in (0, 1)")
    }

    /// Elasticity of labor demand with respect to unit labor cost.
    pub fn unit_cost_response(&self) -> f64 {
        -(1.0 - self.s_l) * self.sigma - self.s_l * self.eta_yp
    }
}

/// Hiring-cost technology `c·W^φ1·θ^φ2 + Ψ` and the wage curve `W = w·θ^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiringCostParams {
    pub c: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub psi: f64,
    pub gamma: f64,
    pub w_scale: f64,
}

impl HiringCostParams {
    pub fn new(c: f64, phi1: f64, phi2: f64, psi: f64, gamma: f64, w_scale: f64) -> Result<Self, ModelError> {
        let p = Self { c, phi1, phi2, psi, gamma, w_scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check("c", self.c, self.c >= 0.0, "must be ≥ 0")?;
        check("phi1", self.phi1, true, "must be finite")?;
        check("phi2", self.phi2, self.phi2 >= 0.0, "must be ≥ 0")?;
        check("psi", self.psi, self.psi >= 0.0, "must be ≥ 0")?;
        check("gamma", self.gamma, self.gamma >= 0.0, "must be ≥ 0")?;
        check("w_scale", self.w_scale, self.w_scale > 0.0, "must be > 0")
    }
}

/// Separation and discount rates that amortize a hire over its expected tenure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmortizationParams {
    pub delta: f64,
    pub r: f64,
}

impl AmortizationParams {
    pub fn new(delta: f64, r: f64) -> Result<Self, ModelError> {
        let p = Self { delta, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check("delta", self.delta, self.delta > 0.0 && self.delta <= 1.0, "must lie in (0, 1]")?;
        check("r", self.r, self.r >= 0.0, "must be ≥ 0")
    }

    pub fn rate(&self) -> f64 {
        self.delta + self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub wage: f64,
    pub theta: f64,
}

impl MarketState {
    pub fn new(wage: f64, theta: f64) -> Result<Self, ModelError> {
        check("wage", wage, wage > 0.0, "must be > 0")?;
        check("theta", theta, theta > 0.0, "must be > 0")?;
        Ok(Self { wage, theta })
    }
}

/// Own-wage and tightness elasticities of labor demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticityPair {
    pub eta_lw: f64,
    pub eta_lt: f64,
}

/// Pre-match hiring cost per hire, `Φ = c·W^φ1·θ^φ2`, evaluated in log space.
pub fn prematch_cost(hc: &HiringCostParams, s: &MarketState) -> Result<f64, ModelError> {
    if hc.c == 0.0 {
        return Ok(0.0);
    }
    let log_phi = hc.c.ln() + hc.phi1 * s.wage.ln() + hc.phi2 * s.theta.ln();
    let phi = log_phi.exp();
    if !phi.is_finite() {
        return Err(ModelError::Domain("prematch_cost"));
    }
    Ok(phi)
}

/// Unit hiring cost `c·W^φ1·θ^φ2 + Ψ`.
pub fn unit_hiring_cost(hc: &HiringCostParams, s: &MarketState) -> Result<f64, ModelError> {
    let v = prematch_cost(hc, s)? + hc.psi;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::Domain("unit_hiring_cost"))
    }
}

/// Unit labor cost `W* = W + (δ+r)·(c·W^φ1·θ^φ2 + Ψ)`.
pub fn unit_labor_cost(hc: &HiringCostParams, am: &AmortizationParams, s: &MarketState) -> Result<f64, ModelError> {
    let v = s.wage + am.rate() * unit_hiring_cost(hc, s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::Domain("unit_labor_cost"))
    }
}

/// `(W*, (δ+r)·Φ)` shared by the elasticity formulas.
fn cost_parts(hc: &HiringCostParams, am: &AmortizationParams, s: &MarketState) -> Result<(f64, f64), ModelError> {
    let amortized_prematch = am.rate() * prematch_cost(hc, s)?;
    let w_star = unit_labor_cost(hc, am, s)?;
    if w_star <= 0.0 {
        return Err(ModelError::Domain("unit labor cost is zero"));
    }
    Ok((w_star, amortized_prematch))
}

/// Hiring-cost adjusted own-wage elasticity of labor demand.
pub fn wage_elasticity(
    tech: &TechnologyParams,
    hc: &HiringCostParams,
    am: &AmortizationParams,
    s: &MarketState,
) -> Result<f64, ModelError> {
    let (w_star, pre) = cost_parts(hc, am, s)?;
    let cost_elasticity = s.wage / w_star + hc.phi1 * pre / w_star;
    Ok(cost_elasticity * tech.unit_cost_response())
}

/// Elasticity of labor demand with respect to labor market tightness.
pub fn tightness_elasticity(
    tech: &TechnologyParams,
    hc: &HiringCostParams,
    am: &AmortizationParams,
    s: &MarketState,
) -> Result<f64, ModelError> {
    let (w_star, pre) = cost_parts(hc, am, s)?;
    Ok(hc.phi2 * pre / w_star * tech.unit_cost_response())
}

/// Tightness elasticity when wages follow the wage curve `W = w·θ^γ`.
pub fn tightness_elasticity_wage_curve(
    tech: &TechnologyParams,
    hc: &HiringCostParams,
    am: &AmortizationParams,
    s: &MarketState,
) -> Result<f64, ModelError> {
    let (w_star, pre) = cost_parts(hc, am, s)?;
    let cost_elasticity = hc.gamma * s.wage / w_star + (hc.gamma * hc.phi1 + hc.phi2) * pre / w_star;
    Ok(cost_elasticity * tech.unit_cost_response())
}

/// Ratio of the tightness elasticity to the own-wage elasticity,
/// `φ2·(δ+r)·Φ / (W + φ1·(δ+r)·Φ)`.
pub fn elasticity_ratio(hc: &HiringCostParams, am: &AmortizationParams, s: &MarketState) -> Result<f64, ModelError> {
    let pre = am.rate() * prematch_cost(hc, s)?;
    let denom = s.wage + hc.phi1 * pre;
    if denom == 0.0 {
        return Err(ModelError::Domain("elasticity_ratio denominator is zero"));
    }
    Ok(hc.phi2 * pre / denom)
}

/// Pre-match hiring cost as a fraction of the wage, backed out from the
/// estimated elasticity pair: `Φ/W = ((δ+r)·(φ2·η_W/η_θ − φ1))⁻¹`.
pub fn prematch_cost_share(
    am: &AmortizationParams,
    phi1: f64,
    phi2: f64,
    eta: &ElasticityPair,
) -> Result<f64, ModelError> {
    am.validate()?;
    if am.rate() <= 0.0 {
        return Err(ModelError::InvalidParameter {
            name: "delta + r",
            value: am.rate(),
            reason: "must be > 0",
        });
    }
    if eta.eta_lt == 0.0 || !eta.eta_lt.is_finite() || !eta.eta_lw.is_finite() {
        return Err(ModelError::InvalidParameter {
            name: "eta_lt",
            value: eta.eta_lt,
            reason: "must be finite and nonzero",
        });
    }
    let denominator = am.rate() * (phi2 * eta.eta_lw / eta.eta_lt - phi1);
    if !(denominator > 0.0) {
        return Err(ModelError::CalibrationInfeasible { denominator });
    }
    Ok(1.0 / denominator)
}

/// Converts a daily separation hazard into a yearly separation rate.
pub fn annualize_separation_rate(daily_rate: f64) -> Result<f64, ModelError> {
    check("daily_rate", daily_rate, (0.0..=1.0).contains(&daily_rate), "must lie in [0, 1]")?;
    Ok(1.0 - (1.0 - daily_rate).powf(DAYS_PER_YEAR))
}

/// Elasticity of tightness with respect to aggregate employment,
/// `ν = (1 − ∂lnU/∂lnL) / (1 − μ)`.
pub fn feedback_nu(mu: f64, dln_u_dln_l: f64) -> Result<f64, ModelError> {
    check("mu", mu, mu > 0.0 && mu < 1.0, "must lie in (0, 1)")?;
    check("dln_u_dln_l", dln_u_dln_l, true, "must be finite")?;
    Ok((1.0 - dln_u_dln_l) / (1.0 - mu))
}

/// Inverts [`feedback_nu`] for the vacancy elasticity of matching, `1 − μ`.
pub fn vacancy_matching_elasticity(nu: f64, dln_u_dln_l: f64) -> Result<f64, ModelError> {
    check("nu", nu, nu != 0.0, "must be finite and nonzero")?;
    check("dln_u_dln_l", dln_u_dln_l, true, "must be finite")?;
    Ok((1.0 - dln_u_dln_l) / nu)
}

/// Aggregate own-wage elasticity `η_W / (1 − ν·η_θ)`.
pub fn aggregate_wage_elasticity(eta_lw: f64, eta_lt: f64, nu: f64) -> Result<f64, ModelError> {
    let omega = nu * eta_lt;
    if !omega.is_finite() || omega.abs() >= 1.0 {
        return Err(ModelError::DivergentFeedback { omega_abs: omega.abs() });
    }
    Ok(eta_lw / (1.0 - omega))
}

/// Fraction by which the feedback cycle shrinks the firm-level elasticity.
pub fn feedback_shrinkage(eta_lt: f64, nu: f64) -> Result<f64, ModelError> {
    let factor = aggregate_wage_elasticity(1.0, eta_lt, nu)?;
    Ok(1.0 - factor)
}

/// Partial sums `Σ_{t=0..T} ω^t` for `T = 0..=horizon`.
pub fn feedback_partial_sums(omega: f64, horizon: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon + 1);
    let mut term = 1.0;
    let mut acc = 0.0;
    for _ in 0..=horizon {
        acc += term;
        out.push(acc);
        term *= omega;
    }
    out
}

/// Flat calibration record of the pre-match cost share, serialized with the
/// same key names as the calibration table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub delta: f64,
    pub r: f64,
    pub eta_lw: f64,
    pub eta_lt: f64,
    pub phi1: f64,
    pub phi2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_over_w: Option<f64>,
}

impl Calibration {
    /// Returns a copy with `phi_over_w` filled in.
    pub fn solve(&self) -> Result<Calibration, ModelError> {
        let am = AmortizationParams::new(self.delta, self.r)?;
        let share = prematch_cost_share(
            &am,
            self.phi1,
            self.phi2,
            &ElasticityPair { eta_lw: self.eta_lw, eta_lt: self.eta_lt },
        )?;
        Ok(Calibration { phi_over_w: Some(share), ..*self })
    }

    pub fn from_json(text: &str) -> Result<Calibration, serde_json::Error> {
        serde_json::from_str(text)
    }
}
