//! Synthetic economies with known labor-demand elasticities.
//!
//! Firms employ a fixed mix of occupations in one region. National wage,
//! vacancy and job-seeker levels per occupation follow log random walks;
//! regional markets add noise around them. Firm employment follows the
//! log-linear demand relation
//!
//! `ln L_it = α_i + η_W ln W_it + η_θ ln θ_it + ξ_t + a_it + e_it`
//!
//! where `a_it` is latent productivity that also raises the firm's wages, so
//! least squares on wages is biased upward while shift-share instruments
//! built from national growth are valid.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::RegionPanel;
use crate::io::{
    CommutingRecord, FirmRecord, LaborForceRecord, MarketRecord, NotificationShareRecord,
    OccupationEmploymentRecord, TransitionRecord,
};
use crate::model::{unit_labor_cost, AmortizationParams, HiringCostParams, MarketState, ModelError, TechnologyParams};
use crate::tightness::{requirement_level, NotificationLevel, REFERENCE_AVERAGE_SHARES};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("degenerate economy: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingParams {
    pub kappa: f64,
    pub mu: f64,
}

impl MatchingParams {
    pub fn new(kappa: f64, mu: f64) -> Result<Self, SimError> {
        let m = Self { kappa, mu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(SimError::InvalidConfig(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(SimError::InvalidConfig(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        Ok(())
    }
}

/// Hires from job seekers `u` and vacancies `v`: `κ·U^μ·V^(1−μ)`.
pub fn matches(u: f64, v: f64, m: &MatchingParams) -> f64 {
    m.kappa * u.powf(m.mu) * v.powf(1.0 - m.mu)
}

/// Tightness at which hires replace separations: `(δL/(κU))^(1/(1−μ))`.
pub fn steady_state_tightness(delta: f64, employment: f64, kappa: f64, job_seekers: f64, mu: f64) -> Result<f64, SimError> {
    MatchingParams::new(kappa, mu)?;
    if !(delta > 0.0 && employment > 0.0 && job_seekers > 0.0) {
        return Err(SimError::InvalidConfig(format!(
            "delta, employment and job seekers must be positive (got {delta}, {employment}, {job_seekers})"
        )));
    }
    let log_theta = ((delta * employment).ln() - (kappa * job_seekers).ln()) / (1.0 - mu);
    Ok(log_theta.exp())
}

/// Cumulative employment response `Σ_{t=0..=horizon} ω^t · first_round`
/// with `ω = ν·η_θ`.
pub fn apply_feedback_cycle(first_round: f64, nu: f64, eta_lt: f64, horizon: usize) -> f64 {
    let omega = nu * eta_lt;
    let mut step = first_round;
    let mut total = 0.0;
    for _ in 0..=horizon {
        total += step;
        step *= omega;
    }
    total
}

/// CES technology with isoelastic product demand under perfect competition.
///
/// Unit cost is `c = (1/A)·(a^σ W*^(1−σ) + b^σ R^(1−σ))^(1/(1−σ))` (Cobb-Douglas
/// at σ = 1), price equals unit cost and output is `D·P^(−η)`. Price, output
/// and capital are outputs of [`ProductionParams::factor_demand`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductionParams {
    pub tfp: f64,
    pub labor_weight: f64,
    pub capital_weight: f64,
    pub sigma: f64,
    pub capital_rate: f64,
    pub demand_scale: f64,
    pub eta_yp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorDemand {
    pub price: f64,
    pub output: f64,
    pub labor: f64,
    pub capital: f64,
    pub labor_share: f64,
}

impl ProductionParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("tfp", self.tfp),
            ("labor_weight", self.labor_weight),
            ("capital_weight", self.capital_weight),
            ("capital_rate", self.capital_rate),
            ("demand_scale", self.demand_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma >= 0.0 && self.eta_yp >= 0.0) {
            return Err(SimError::InvalidConfig("sigma and eta_yp must be non-negative".into()));
        }
        Ok(())
    }

    /// Cost-minimizing factor demands at labor cost `w_star`.
    pub fn factor_demand(&self, w_star: f64) -> FactorDemand {
        let (a, b, r, s) = (self.labor_weight, self.capital_weight, self.capital_rate, self.sigma);
        let (cost, dc_dw, dc_dr) = if (s - 1.0).abs() < 1e-9 {
            let alpha = a / (a + b);
            let c = (w_star / alpha).powf(alpha) * (r / (1.0 - alpha)).powf(1.0 - alpha) / self.tfp;
            (c, alpha * c / w_star, (1.0 - alpha) * c / r)
        } else {
            let lab = a.powf(s) * w_star.powf(1.0 - s);
            let cap = b.powf(s) * r.powf(1.0 - s);
            let sum = lab + cap;
            let c = sum.powf(1.0 / (1.0 - s)) / self.tfp;
            let common = sum.powf(s / (1.0 - s)) / self.tfp;
            (c, common * a.powf(s) * w_star.powf(-s), common * b.powf(s) * r.powf(-s))
        };
        let output = self.demand_scale * cost.powf(-self.eta_yp);
        FactorDemand {
            price: cost,
            output,
            labor: output * dc_dw,
            capital: output * dc_dr,
            labor_share: w_star * dc_dw / cost,
        }
    }

    pub fn technology(&self, w_star: f64) -> Result<TechnologyParams, ModelError> {
        TechnologyParams::new(self.sigma, self.eta_yp, self.factor_demand(w_star).labor_share)
    }
}

/// Labor demand at wage and tightness through the unit labor cost.
pub fn structural_labor_demand(
    prod: &ProductionParams,
    hc: &HiringCostParams,
    am: &AmortizationParams,
    state: &MarketState,
) -> Result<FactorDemand, ModelError> {
    let w_star = unit_labor_cost(hc, am, state)?;
    Ok(prod.factor_demand(w_star))
}

/// Standard deviations of national log growth per occupation and year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NationalShockSd {
    pub wage: f64,
    pub vacancies: f64,
    pub job_seekers: f64,
}

impl Default for NationalShockSd {
    fn default() -> Self {
        Self { wage: 0.03, vacancies: 0.15, job_seekers: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomyConfig {
    pub n_occupations: usize,
    pub n_regions: usize,
    pub n_firms: usize,
    /// Number of observed years, starting at `base_year`.
    pub n_years: usize,
    pub base_year: i32,
    pub seed: u64,
    pub true_eta_lw: f64,
    pub true_eta_lt: f64,
    pub national_shock_sd: NationalShockSd,
    /// Yearly firm-specific wage growth shock.
    pub idiosyncratic_sd: f64,
    /// Yearly latent productivity shock, entering employment one-for-one and
    /// wages with `confound_wage_loading`.
    pub demand_confound_sd: f64,
    pub confound_wage_loading: f64,
    /// Yearly firm employment noise.
    pub employment_noise_sd: f64,
    /// Region-year employment shock shared by all firms in a region.
    pub region_shock_sd: f64,
    /// Noise of regional stocks around the national path.
    pub regional_sd: f64,
    pub max_occupations_per_firm: usize,
    /// Symmetric Dirichlet concentration of firm occupation shares.
    pub share_concentration: f64,
    pub round_employment: bool,
}

impl Default for EconomyConfig {
    fn default() -> Self {
        Self {
            n_occupations: 40,
            n_regions: 20,
            n_firms: 2000,
            n_years: 8,
            base_year: 2012,
            seed: 1,
            true_eta_lw: -0.713,
            true_eta_lt: -0.048,
            national_shock_sd: NationalShockSd::default(),
            idiosyncratic_sd: 0.02,
            demand_confound_sd: 0.03,
            confound_wage_loading: 0.5,
            employment_noise_sd: 0.03,
            region_shock_sd: 0.01,
            regional_sd: 0.05,
            max_occupations_per_firm: 4,
            share_concentration: 1.0,
            round_employment: false,
        }
    }
}

impl EconomyConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let counts = [
            ("n_occupations", self.n_occupations),
            ("n_regions", self.n_regions),
            ("n_firms", self.n_firms),
            ("n_years", self.n_years),
            ("max_occupations_per_firm", self.max_occupations_per_firm),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SimError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.n_occupations > 8999 {
            return Err(SimError::InvalidConfig("at most 8999 occupations fit the 5-digit code scheme".into()));
        }
        let sds = [
            ("national_shock_sd.wage", self.national_shock_sd.wage),
            ("national_shock_sd.vacancies", self.national_shock_sd.vacancies),
            ("national_shock_sd.job_seekers", self.national_shock_sd.job_seekers),
            ("idiosyncratic_sd", self.idiosyncratic_sd),
            ("demand_confound_sd", self.demand_confound_sd),
            ("employment_noise_sd", self.employment_noise_sd),
            ("region_shock_sd", self.region_shock_sd),
            ("regional_sd", self.regional_sd),
        ];
        for (name, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(self.share_concentration > 0.0 && self.share_concentration.is_finite()) {
            return Err(SimError::InvalidConfig("share_concentration must be positive".into()));
        }
        for (name, v) in [
            ("true_eta_lw", self.true_eta_lw),
            ("true_eta_lt", self.true_eta_lt),
            ("confound_wage_loading", self.confound_wage_loading),
        ] {
            if !v.is_finite() {
                return Err(SimError::InvalidConfig(format!("{name} must be finite")));
            }
        }
        let sd = &self.national_shock_sd;
        if sd.wage == 0.0 && sd.vacancies == 0.0 && sd.job_seekers == 0.0 {
            return Err(SimError::Degenerate(
                "all national shock variances are zero, so every instrument is collinear with the year effects".into(),
            ));
        }
        if self.n_occupations == 1 {
            return Err(SimError::Degenerate(
                "a single occupation gives every firm the same exposure, so the instruments are collinear with the year effects".into(),
            ));
        }
        Ok(())
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.n_years as i32).map(move |t| self.base_year + t)
    }
}

/// Code of occupation `o`: a unique four-digit stem and a requirement-level digit.
pub fn occupation_code(o: usize) -> String {
    format!("{}{}", 1000 + o, 1 + o % 4)
}

/// National log growth shocks per occupation and year, retained for checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NationalShocks {
    pub occupation: String,
    pub year: i32,
    pub wage: f64,
    pub vacancies: f64,
    pub job_seekers: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub config: EconomyConfig,
    pub firms: Vec<FirmRecord>,
    pub markets: Vec<MarketRecord>,
    pub notification_shares: Vec<NotificationShareRecord>,
    pub transitions: Vec<TransitionRecord>,
    pub occupation_employment: Vec<OccupationEmploymentRecord>,
    pub commuting: Vec<CommutingRecord>,
    pub labor_force: Vec<LaborForceRecord>,
    /// Region of each firm, indexed by `firm_id − 1`.
    pub firm_region: Vec<u64>,
    pub shocks: Vec<NationalShocks>,
    /// Latent productivity per firm and year, `[firm][year]`.
    pub latent_productivity: Vec<Vec<f64>>,
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sd * z
}

fn notification_share(code: &str) -> f64 {
    let level = requirement_level(code).expect("generated codes are valid").pooled();
    match level {
        NotificationLevel::Helper => REFERENCE_AVERAGE_SHARES[0],
        NotificationLevel::Professional => REFERENCE_AVERAGE_SHARES[1],
        NotificationLevel::SpecialistExpert => REFERENCE_AVERAGE_SHARES[2],
    }
}

/// Generates a firm panel, market stocks and auxiliary tables.
/// Identical configs produce bit-identical output.
pub fn simulate_economy(cfg: &EconomyConfig) -> Result<SyntheticPanel, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n_o, n_r, n_f, n_t) = (cfg.n_occupations, cfg.n_regions, cfg.n_firms, cfg.n_years);
    let codes: Vec<String> = (0..n_o).map(occupation_code).collect();
    let years: Vec<i32> = cfg.years().collect();

    // National paths in logs, cumulative from the base year.
    let mut nat_w = vec![vec![0.0; n_t]; n_o];
    let mut nat_v = vec![vec![0.0; n_t]; n_o];
    let mut nat_u = vec![vec![0.0; n_t]; n_o];
    let mut shocks = Vec::with_capacity(n_o * n_t);
    for o in 0..n_o {
        for t in 1..n_t {
            let gw = normal(&mut rng, cfg.national_shock_sd.wage);
            let gv = normal(&mut rng, cfg.national_shock_sd.vacancies);
            let gu = normal(&mut rng, cfg.national_shock_sd.job_seekers);
            nat_w[o][t] = nat_w[o][t - 1] + gw;
            nat_v[o][t] = nat_v[o][t - 1] + gv;
            nat_u[o][t] = nat_u[o][t - 1] + gu;
            shocks.push(NationalShocks { occupation: codes[o].clone(), year: years[t], wage: gw, vacancies: gv, job_seekers: gu });
        }
    }
    let base_wage: Vec<f64> = (0..n_o).map(|_| (80.0_f64).ln() + normal(&mut rng, 0.3)).collect();

    // Regional stocks around the national path.
    let mut ln_v = vec![vec![vec![0.0; n_t]; n_r]; n_o];
    let mut ln_u = vec![vec![vec![0.0; n_t]; n_r]; n_o];
    for o in 0..n_o {
        for r in 0..n_r {
            let base_u = (600.0_f64).ln() + normal(&mut rng, 0.5);
            let base_theta = (0.3_f64).ln() + normal(&mut rng, 0.3);
            for t in 0..n_t {
                ln_u[o][r][t] = (base_u + nat_u[o][t] + normal(&mut rng, cfg.regional_sd)).max(0.0);
                ln_v[o][r][t] = (base_u + base_theta + nat_v[o][t] + normal(&mut rng, cfg.regional_sd)).max(0.0);
            }
        }
    }
    let ratio = |o: usize, r: usize, t: usize| (ln_v[o][r][t] - ln_u[o][r][t]).exp();

    let year_effect: Vec<f64> = {
        let mut acc = 0.0;
        (0..n_t)
            .map(|t| {
                if t > 0 {
                    acc += normal(&mut rng, 0.02);
                }
                acc
            })
            .collect()
    };
    let mut region_shock = vec![vec![0.0; n_t]; n_r];
    for row in region_shock.iter_mut() {
        for t in 1..n_t {
            row[t] = row[t - 1] + normal(&mut rng, cfg.region_shock_sd);
        }
    }

    let gamma = Gamma::new(cfg.share_concentration, 1.0).expect("validated concentration");
    let max_k = cfg.max_occupations_per_firm.min(n_o);
    let mut firms = Vec::with_capacity(n_f * n_t * 2);
    let mut firm_region = Vec::with_capacity(n_f);
    let mut latent_productivity = Vec::with_capacity(n_f);
    let mut occ_emp_base = vec![0.0; n_o];
    for i in 0..n_f {
        let region = rng.random_range(0..n_r);
        firm_region.push(region as u64 + 1);
        let k = rng.random_range(1..=max_k);
        let mut occs: Vec<usize> = rand::seq::index::sample(&mut rng, n_o, k).into_vec();
        occs.sort_unstable();
        let raw: Vec<f64> = occs.iter().map(|_| gamma.sample(&mut rng).max(1e-12)).collect();
        let total: f64 = raw.iter().sum();
        let shares: Vec<f64> = raw.iter().map(|s| s / total).collect();
        let firm_fe: Vec<f64> = occs.iter().map(|_| normal(&mut rng, 0.1)).collect();
        let alpha = (5.0_f64).ln() + rng.random::<f64>() * (200.0_f64 / 5.0).ln();

        let mut idio = 0.0;
        let mut latent = 0.0;
        let mut noise = 0.0;
        let mut a_path = Vec::with_capacity(n_t);
        for t in 0..n_t {
            if t > 0 {
                idio += normal(&mut rng, cfg.idiosyncratic_sd);
                latent += normal(&mut rng, cfg.demand_confound_sd);
                noise += normal(&mut rng, cfg.employment_noise_sd);
            }
            a_path.push(latent);
            let wages: Vec<f64> = occs
                .iter()
                .zip(&firm_fe)
                .map(|(&o, fe)| (base_wage[o] + nat_w[o][t] + fe + idio + cfg.confound_wage_loading * latent).exp())
                .collect();
            let firm_wage: f64 = shares.iter().zip(&wages).map(|(s, w)| s * w).sum();
            let theta: f64 = shares.iter().zip(&occs).map(|(s, &o)| s * ratio(o, region, t)).sum();
            let ln_l = alpha
                + cfg.true_eta_lw * (firm_wage.ln() - (80.0_f64).ln())
                + cfg.true_eta_lt * theta.ln()
                + year_effect[t]
                + latent
                + noise
                + region_shock[region][t];
            let l = ln_l.exp();
            for ((&o, s), w) in occs.iter().zip(&shares).zip(&wages) {
                let mut emp = s * l;
                if cfg.round_employment {
                    emp = emp.round();
                }
                if t == 0 {
                    occ_emp_base[o] += emp;
                }
                firms.push(FirmRecord {
                    firm_id: i as u64 + 1,
                    year: years[t],
                    occupation: codes[o].clone(),
                    region: region as u64 + 1,
                    employment: emp,
                    wage_daily: *w,
                });
            }
        }
        latent_productivity.push(a_path);
    }

    let mut markets = Vec::with_capacity(n_o * n_r * n_t);
    for t in 0..n_t {
        for o in 0..n_o {
            let share = notification_share(&codes[o]);
            for r in 0..n_r {
                markets.push(MarketRecord {
                    occupation: codes[o].clone(),
                    region: r as u64 + 1,
                    year: years[t],
                    registered_vacancies: ln_v[o][r][t].exp() * share,
                    job_seekers: ln_u[o][r][t].exp(),
                });
            }
        }
    }
    let mut notification_shares = Vec::new();
    for &year in &years {
        for (level, share) in NotificationLevel::ALL.iter().zip(REFERENCE_AVERAGE_SHARES) {
            notification_shares.push(NotificationShareRecord { year, level: level.label().to_string(), share });
        }
    }

    let transitions = synthetic_transitions(&codes);
    let occupation_employment = codes
        .iter()
        .zip(&occ_emp_base)
        .map(|(c, e)| OccupationEmploymentRecord { occupation: c.clone(), employment: e.max(1.0) })
        .collect();
    let (commuting, labor_force) = synthetic_commuting(n_r, &mut rng);

    Ok(SyntheticPanel {
        config: cfg.clone(),
        firms,
        markets,
        notification_shares,
        transitions,
        occupation_employment,
        commuting,
        labor_force,
        firm_region,
        shocks,
        latent_productivity,
    })
}

/// Strongly diagonal transitions with mobility to adjacent occupation codes.
fn synthetic_transitions(codes: &[String]) -> Vec<TransitionRecord> {
    let n = codes.len();
    let mut out = Vec::new();
    for o in 0..n {
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        row.insert(o, 0.9);
        let neighbors: Vec<usize> = [o.wrapping_sub(1), o + 1].into_iter().filter(|&h| h < n && h != o).collect();
        if neighbors.is_empty() {
            row.insert(o, 1.0);
        } else {
            for h in &neighbors {
                row.insert(*h, 0.1 / neighbors.len() as f64);
            }
        }
        for (h, p) in row {
            out.push(TransitionRecord { from_occupation: codes[o].clone(), to_occupation: codes[h].clone(), probability: p });
        }
    }
    out
}

/// Regions arranged in groups of four with heavy within-group commuting.
fn synthetic_commuting(n_r: usize, rng: &mut ChaCha8Rng) -> (Vec<CommutingRecord>, Vec<LaborForceRecord>) {
    let lf: Vec<f64> = (0..n_r).map(|_| (10_000.0 * (1.0 + 4.0 * rng.random::<f64>())).round()).collect();
    let mut flows = Vec::new();
    for a in 0..n_r {
        for b in (a + 1)..n_r {
            let same = a / 4 == b / 4;
            let base = if same { 0.08 } else { 0.002 };
            let workers = (base * lf[a].min(lf[b]) * (0.5 + rng.random::<f64>())).round();
            if workers > 0.0 {
                flows.push(CommutingRecord { from_region: a as u64 + 1, to_region: b as u64 + 1, workers });
            }
        }
    }
    let labor_force = lf
        .iter()
        .enumerate()
        .map(|(r, &labor_force)| LaborForceRecord { region: r as u64 + 1, labor_force })
        .collect();
    (flows, labor_force)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub n_regions: usize,
    pub n_occupations: usize,
    pub n_years: usize,
    pub base_year: i32,
    pub seed: u64,
    pub matching: MatchingParams,
    pub delta: f64,
    pub dln_u_dln_l: f64,
    pub exposure_sd: f64,
    pub employment_noise_sd: f64,
    pub job_seeker_noise_sd: f64,
    /// Correlation of job-seeker noise with employment noise.
    pub noise_correlation: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            n_regions: 150,
            n_occupations: 30,
            n_years: 8,
            base_year: 2012,
            seed: 1,
            matching: MatchingParams { kappa: 0.5, mu: 0.46 },
            delta: 0.331,
            dln_u_dln_l: -4.039,
            exposure_sd: 0.05,
            employment_noise_sd: 0.01,
            job_seeker_noise_sd: 0.02,
            noise_correlation: 0.5,
        }
    }
}

impl FeedbackConfig {
    /// `ν = (1 − dlnU/dlnL)/(1 − μ)`.
    pub fn true_nu(&self) -> f64 {
        (1.0 - self.dln_u_dln_l) / (1.0 - self.matching.mu)
    }
}

/// Regional panel in which employment responds to a shift-share exposure,
/// job seekers respond to employment with slope `dln_u_dln_l`, and tightness
/// sits at the matching steady state.
pub fn simulate_regional_feedback(cfg: &FeedbackConfig) -> Result<RegionPanel, SimError> {
    cfg.matching.validate()?;
    if cfg.n_regions < 2 || cfg.n_years < 2 || cfg.n_occupations < 2 {
        return Err(SimError::InvalidConfig("need at least two regions, years and occupations".into()));
    }
    if !(cfg.noise_correlation.abs() <= 1.0) {
        return Err(SimError::InvalidConfig("noise_correlation must lie in [-1, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let growth: Vec<Vec<f64>> = (0..cfg.n_occupations)
        .map(|_| (0..cfg.n_years).map(|_| normal(&mut rng, cfg.exposure_sd)).collect())
        .collect();
    let gamma = Gamma::<f64>::new(0.5, 1.0).expect("positive shape");
    let mut panel = RegionPanel::default();
    let rho = cfg.noise_correlation;
    let indep = (1.0 - rho * rho).sqrt();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for r in 0..cfg.n_regions {
        let raw: Vec<f64> = (0..cfg.n_occupations).map(|_| gamma.sample(&mut rng).max(1e-12)).collect();
        let total: f64 = raw.iter().sum();
        let shares: Vec<f64> = raw.iter().map(|s| s / total).collect();
        let mut ln_l = (50_000.0_f64).ln() + normal(&mut rng, 0.5);
        let mut ln_u = ln_l + (0.08_f64).ln() + normal(&mut rng, 0.2);
        for t in 0..cfg.n_years {
            let exposure: f64 = shares.iter().zip(&growth).map(|(s, g)| s * g[t]).sum();
            if t > 0 {
                let e_l: f64 = noise.sample(&mut rng);
                let e_u = rho * e_l + indep * noise.sample(&mut rng);
                let dl = exposure + cfg.employment_noise_sd * e_l;
                ln_l += dl;
                ln_u += cfg.dln_u_dln_l * dl + cfg.job_seeker_noise_sd * e_u;
            }
            let (l, u) = (ln_l.exp(), ln_u.exp());
            let theta = steady_state_tightness(cfg.delta, l, cfg.matching.kappa, u, cfg.matching.mu)?;
            panel.region.push(r as u64 + 1);
            panel.year.push(cfg.base_year + t as i32);
            panel.employment.push(l);
            panel.job_seekers.push(u);
            panel.vacancies.push(theta * u);
            panel.exposure.push(exposure);
        }
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::wage_elasticity;

    #[test]
    fn matches_examples() {
        let m = MatchingParams::new(1.0, 0.3).unwrap();
        assert!((matches(7.0, 7.0, &m) - 7.0).abs() < 1e-12);
        let m = MatchingParams::new(0.5, 0.46).unwrap();
        assert!((matches(100.0, 25.0, &m) - 23.6514411681399).abs() < 1e-9);
        assert!((matches(300.0, 75.0, &m) - 3.0 * 23.6514411681399).abs() < 1e-9);
    }

    #[test]
    fn steady_state_residual() {
        let (delta, l, kappa, u, mu) = (0.3, 1000.0, 0.5, 250.0, 0.46);
        let theta = steady_state_tightness(delta, l, kappa, u, mu).unwrap();
        let m = MatchingParams::new(kappa, mu).unwrap();
        let hires = matches(u, theta * u, &m);
        assert!((hires - delta * l).abs() / (delta * l) < 1e-10);
        assert!((steady_state_tightness(0.5, 10.0, 1.0, 5.0, 0.4).unwrap() - 1.0).abs() < 1e-15);
        assert!(steady_state_tightness(delta, l * 1.01, kappa, u, mu).unwrap() > theta);
    }

    #[test]
    fn feedback_cycle_reference_values() {
        let omega_nu = 9.285;
        let cum = apply_feedback_cycle(1.0, omega_nu, -0.048, 10_000);
        assert!((cum - 0.692).abs() < 1e-3, "{cum}");
        assert_eq!(apply_feedback_cycle(0.3, 0.0, -0.048, 5), 0.3);
        let two = apply_feedback_cycle(1.0, omega_nu, -0.048, 2);
        assert!((two - cum).abs() / cum < 0.10);
    }

    #[test]
    fn ces_labor_share_and_elasticity() {
        let prod = ProductionParams {
            tfp: 1.3,
            labor_weight: 0.6,
            capital_weight: 0.4,
            sigma: 0.7,
            capital_rate: 0.9,
            demand_scale: 100.0,
            eta_yp: 1.5,
        };
        let h: f64 = 1e-5;
        let w = 1.2;
        let ln_l = |w: f64| prod.factor_demand(w).labor.ln();
        let numeric = (ln_l(w * h.exp()) - ln_l(w * (-h).exp())) / (2.0 * h);
        let tech = prod.technology(w).unwrap();
        assert!((numeric - tech.unit_cost_response()).abs() < 1e-7, "{numeric}");
    }

    #[test]
    fn cobb_douglas_branch_share() {
        let prod = ProductionParams {
            tfp: 1.0,
            labor_weight: 0.7,
            capital_weight: 0.3,
            sigma: 1.0,
            capital_rate: 1.0,
            demand_scale: 10.0,
            eta_yp: 0.8,
        };
        assert!((prod.factor_demand(2.0).labor_share - 0.7).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_matches_wage_elasticity() {
        let prod = ProductionParams {
            tfp: 1.0,
            labor_weight: 0.6,
            capital_weight: 0.4,
            sigma: 0.8,
            capital_rate: 1.0,
            demand_scale: 50.0,
            eta_yp: 1.2,
        };
        let hc = HiringCostParams::new(2.0, 1.852, 0.468, 3.0, 0.0, 1.0).unwrap();
        let am = AmortizationParams::new(0.331, 0.15).unwrap();
        let (w, theta) = (15.0, 0.636);
        let state = MarketState::new(w, theta).unwrap();
        let h: f64 = 1e-5;
        let ln_l = |w: f64| {
            structural_labor_demand(&prod, &hc, &am, &MarketState::new(w, theta).unwrap()).unwrap().labor.ln()
        };
        let numeric = (ln_l(w * h.exp()) - ln_l(w * (-h).exp())) / (2.0 * h);
        let w_star = unit_labor_cost(&hc, &am, &state).unwrap();
        let tech = prod.technology(w_star).unwrap();
        let analytic = wage_elasticity(&tech, &hc, &am, &state).unwrap();
        assert!((numeric - analytic).abs() < 1e-3, "{numeric} vs {analytic}");
    }

    fn small() -> EconomyConfig {
        EconomyConfig { n_firms: 50, n_occupations: 8, n_regions: 3, n_years: 4, ..Default::default() }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate_economy(&small()).unwrap();
        let b = simulate_economy(&small()).unwrap();
        assert_eq!(a, b);
        let c = simulate_economy(&EconomyConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.firms, c.firms);
    }

    #[test]
    fn shares_sum_to_one() {
        let p = simulate_economy(&small()).unwrap();
        let mut totals: BTreeMap<(u64, i32), f64> = BTreeMap::new();
        for r in &p.firms {
            *totals.entry((r.firm_id, r.year)).or_default() += r.employment;
        }
        let mut by_occ: BTreeMap<(u64, i32), Vec<f64>> = BTreeMap::new();
        for r in &p.firms {
            by_occ.entry((r.firm_id, r.year)).or_default().push(r.employment / totals[&(r.firm_id, r.year)]);
        }
        for shares in by_occ.values() {
            assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(p.firms.iter().all(|r| r.wage_daily > 0.0 && r.employment >= 0.0));
        assert!(p.markets.iter().all(|m| m.job_seekers >= 1.0));
    }

    #[test]
    fn degenerate_configs_flagged() {
        let zero = NationalShockSd { wage: 0.0, vacancies: 0.0, job_seekers: 0.0 };
        let cfg = EconomyConfig { national_shock_sd: zero, ..small() };
        assert!(matches!(simulate_economy(&cfg), Err(SimError::Degenerate(_))));
        let cfg = EconomyConfig { n_occupations: 1, ..small() };
        assert!(matches!(simulate_economy(&cfg), Err(SimError::Degenerate(_))));
        let cfg = EconomyConfig { n_firms: 0, ..small() };
        assert!(matches!(simulate_economy(&cfg), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn occupation_codes_are_five_digits() {
        assert_eq!(occupation_code(0), "10001");
        assert_eq!(occupation_code(7), "10074");
        assert!((0..40).map(occupation_code).all(|c| c.len() == 5));
    }
}
