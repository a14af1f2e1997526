//! Pipeline configuration file (TOML), one section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{Covariance, FixedEffect, RegressionSpec};
use crate::market_sim::EconomyConfig;
use crate::model::Calibration;
use crate::policy::{ChangeConvention, CounterfactualPath, Estimate, MinWageInputs};
use crate::shift_share::WageWeighting;
use crate::zones::ContiguityMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: input `{name}` not found at {path}")]
    MissingPath { name: &'static str, path: PathBuf },
    #[error("config: {0}")]
    Io(#[from] std::io::Error),
}

/// Input tables. Relative paths are resolved against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub firm_panel: Option<PathBuf>,
    pub markets: Option<PathBuf>,
    pub notification_shares: Option<PathBuf>,
    pub transitions: Option<PathBuf>,
    pub occupation_employment: Option<PathBuf>,
    pub commuting: Option<PathBuf>,
    pub labor_force: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    /// Region → zone assignment; markets are pooled within zones when set.
    pub zones: Option<PathBuf>,
    pub market_tightness: Option<PathBuf>,
    pub firm_tightness: Option<PathBuf>,
    pub instruments: Option<PathBuf>,
    /// Yearly employment and tightness per worker group.
    pub series: Option<PathBuf>,
}

impl InputPaths {
    fn entries(&mut self) -> [(&'static str, &mut Option<PathBuf>); 13] {
        [
            ("firm_panel", &mut self.firm_panel),
            ("markets", &mut self.markets),
            ("notification_shares", &mut self.notification_shares),
            ("transitions", &mut self.transitions),
            ("occupation_employment", &mut self.occupation_employment),
            ("commuting", &mut self.commuting),
            ("labor_force", &mut self.labor_force),
            ("adjacency", &mut self.adjacency),
            ("zones", &mut self.zones),
            ("market_tightness", &mut self.market_tightness),
            ("firm_tightness", &mut self.firm_tightness),
            ("instruments", &mut self.instruments),
            ("series", &mut self.series),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TightnessSettings {
    /// Gross registered vacancies up by notification shares.
    pub notification: bool,
    /// Use flow-adjusted stocks.
    pub flow_adjustment: bool,
    /// Flow weights above this value are logged.
    pub weight_warn_above: f64,
}

impl Default for TightnessSettings {
    fn default() -> Self {
        Self { notification: true, flow_adjustment: false, weight_warn_above: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentConfig {
    pub base_year: i32,
    pub lag: i32,
    pub wage_weighting: WageWeighting,
    /// Largest share mass on occupations without national growth that is
    /// renormalized away.
    pub missing_cap: f64,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        Self { base_year: 2012, lag: 2, wage_weighting: WageWeighting::Employment, missing_cap: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSettings {
    pub lag: i32,
    /// E.g. `["year"]` or `["year*zone"]`; keys are `year`, `region`, `zone`.
    pub fixed_effects: Vec<FixedEffect>,
    /// `firm`, `region`, `zone` or `none` (heteroskedasticity-robust).
    pub cluster: String,
    pub small_sample: bool,
    pub weak_instrument_threshold: f64,
    /// Also report least squares and the reduced form.
    pub report_ols: bool,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            lag: 2,
            fixed_effects: vec![FixedEffect::single("year")],
            cluster: "firm".into(),
            small_sample: true,
            weak_instrument_threshold: 10.0,
            report_ols: true,
        }
    }
}

impl EstimateSettings {
    pub fn covariance(&self) -> Result<Covariance, ConfigError> {
        match self.cluster.as_str() {
            "none" => Ok(Covariance::Robust),
            "firm" => Ok(Covariance::Cluster("unit".into())),
            "region" | "zone" => Ok(Covariance::Cluster(self.cluster.clone())),
            other => Err(ConfigError::Invalid(format!("unknown cluster key `{other}`"))),
        }
    }

    /// Applies fixed effects, clustering and thresholds to `spec`.
    pub fn apply(&self, mut spec: RegressionSpec) -> Result<RegressionSpec, ConfigError> {
        spec.fixed_effects = self.fixed_effects.clone();
        spec.covariance = self.covariance()?;
        spec.small_sample = self.small_sample;
        spec.weak_instrument_threshold = self.weak_instrument_threshold;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoneSettings {
    pub grid_start: f64,
    pub grid_end: f64,
    pub grid_step: f64,
    /// `split` or `attach`; contiguity is only enforced when adjacency is given.
    pub contiguity: ContiguityMode,
}

impl Default for ZoneSettings {
    fn default() -> Self {
        Self { grid_start: 0.01, grid_end: 0.50, grid_step: 0.01, contiguity: ContiguityMode::Split }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupElasticity {
    pub name: String,
    pub eta_lt: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualSettings {
    pub base_year: i32,
    pub convention: ChangeConvention,
    pub path: CounterfactualPath,
    pub draws: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub groups: Vec<GroupElasticity>,
}

impl Default for CounterfactualSettings {
    fn default() -> Self {
        Self {
            base_year: 2012,
            convention: ChangeConvention::LogChange,
            path: CounterfactualPath::FromBase,
            draws: 10_000,
            seed: 1,
            ci_level: 0.95,
            groups: vec![
                GroupElasticity { name: "full_time".into(), eta_lt: -0.048, se: 0.002 },
                GroupElasticity { name: "part_time".into(), eta_lt: -0.043, se: 0.002 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySettings {
    pub calibration: Calibration,
    pub minwage: Vec<MinWageInputs>,
    pub counterfactual: CounterfactualSettings,
}

impl Default for PolicySettings {
    fn default() -> Self {
        let minwage = |eta: f64, se: f64| MinWageInputs {
            elasticity: Estimate::new(eta, se),
            wage_effect: Estimate::new(0.0069, 0.00004),
            workforce: 19_717_863.0,
            draws: 10_000,
            seed: 1,
        };
        Self {
            calibration: Calibration {
                delta: 0.331,
                r: 0.150,
                eta_lw: -0.730,
                eta_lt: -0.051,
                phi1: 1.852,
                phi2: 0.468,
                phi_over_w: None,
            },
            minwage: vec![minwage(-0.494, 0.022), minwage(-0.713, 0.021)],
            counterfactual: CounterfactualSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub simulate: EconomyConfig,
    pub tightness: TightnessSettings,
    pub instruments: InstrumentConfig,
    pub estimate: EstimateSettings,
    pub zones: ZoneSettings,
    pub policy: PolicySettings,
}

impl PipelineConfig {
    /// Parses and validates settings; input paths are left as written.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative input paths against its
    /// directory. Existence is left to [`check_paths`](Self::check_paths) or
    /// the caller, since one file may list outputs of an earlier stage.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        for (_, p) in self.inputs.entries() {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        }
    }

    pub fn check_paths(&mut self) -> Result<(), ConfigError> {
        for (name, p) in self.inputs.entries() {
            if let Some(path) = p.as_ref() {
                if !path.exists() {
                    return Err(ConfigError::MissingPath { name, path: path.clone() });
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.simulate.validate().map_err(|e| ConfigError::Invalid(format!("[simulate] {e}")))?;
        if self.instruments.lag < 1 || self.estimate.lag < 1 {
            return Err(ConfigError::Invalid("lags must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.instruments.missing_cap) {
            return Err(ConfigError::Invalid("[instruments] missing_cap must lie in [0, 1)".into()));
        }
        self.estimate.covariance()?;
        let z = &self.zones;
        if !(z.grid_step > 0.0 && z.grid_start <= z.grid_end) {
            return Err(ConfigError::Invalid("[zones] grid needs grid_step > 0 and grid_start <= grid_end".into()));
        }
        if !(self.tightness.weight_warn_above > 0.0) {
            return Err(ConfigError::Invalid("[tightness] weight_warn_above must be positive".into()));
        }
        Ok(())
    }

    pub fn default_toml() -> String {
        toml::to_string_pretty(&PipelineConfig::default()).expect("default config serializes")
    }
}
