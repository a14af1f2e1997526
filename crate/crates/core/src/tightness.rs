//! Market and firm-level labor market tightness.
//!
//! Registered vacancies are grossed up by the yearly notification share of
//! their requirement level. Firm tightness is the employment-share weighted
//! mean of the vacancy/job-seeker ratios of the firm's occupations in its
//! region. The flow-adjusted variant replaces each occupation's stocks by
//! weighted sums over occupations workers move between.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{AdjustedMarketRecord, FirmRecord, FirmTightnessRecord, MarketRecord, NotificationShareRecord, OccupationEmploymentRecord, TransitionRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TightnessError {
    #[error("invalid occupation code `{0}`: the fifth digit must be 1-4")]
    InvalidOccupation(String),
    #[error("unknown requirement level `{0}`")]
    UnknownLevel(String),
    #[error("no notification share for {level} in {year}")]
    MissingShare { year: i32, level: String },
    #[error("notification share {share} for {level} in {year} outside (0, 1]")]
    InvalidShare { year: i32, level: String, share: f64 },
    #[error("duplicate entry: {0}")]
    Duplicate(String),
    #[error("tightness undefined for occupation {occupation}, region {region}, year {year}: no job seekers")]
    Undefined { occupation: String, region: u64, year: i32 },
    #[error("transition row for {occupation} sums to {sum}")]
    RowSum { occupation: String, sum: f64 },
    #[error("occupation {0} has no probability of staying")]
    ZeroStay(String),
    #[error("occupation {0} has zero employment")]
    ZeroEmployment(String),
    #[error("occupation {0} missing from the transition matrix")]
    UnknownOccupation(String),
    #[error("firm {firm_id} appears in regions {first} and {second}; each firm must have a single region")]
    MultiRegionFirm { firm_id: u64, first: u64, second: u64 },
    #[error("region {0} has no zone assignment")]
    UnassignedRegion(u64),
}

/// Skill requirement encoded in the fifth digit of an occupation code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementLevel {
    Helper,
    Professional,
    Specialist,
    Expert,
}

/// Requirement levels with published notification shares; specialists and
/// experts share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationLevel {
    Helper,
    Professional,
    SpecialistExpert,
}

impl RequirementLevel {
    pub fn pooled(self) -> NotificationLevel {
        match self {
            RequirementLevel::Helper => NotificationLevel::Helper,
            RequirementLevel::Professional => NotificationLevel::Professional,
            RequirementLevel::Specialist | RequirementLevel::Expert => NotificationLevel::SpecialistExpert,
        }
    }
}

impl NotificationLevel {
    pub const ALL: [NotificationLevel; 3] =
        [NotificationLevel::Helper, NotificationLevel::Professional, NotificationLevel::SpecialistExpert];

    pub fn label(self) -> &'static str {
        match self {
            NotificationLevel::Helper => "helper",
            NotificationLevel::Professional => "professional",
            NotificationLevel::SpecialistExpert => "specialist_expert",
        }
    }

    pub fn parse(label: &str) -> Result<Self, TightnessError> {
        Self::ALL
            .into_iter()
            .find(|l| l.label() == label)
            .ok_or_else(|| TightnessError::UnknownLevel(label.to_string()))
    }
}

pub fn requirement_level(occupation: &str) -> Result<RequirementLevel, TightnessError> {
    let bytes = occupation.as_bytes();
    if bytes.len() != 5 || !bytes.iter().all(u8::is_ascii_digit) {
        return Err(TightnessError::InvalidOccupation(occupation.to_string()));
    }
    match bytes[4] {
        b'1' => Ok(RequirementLevel::Helper),
        b'2' => Ok(RequirementLevel::Professional),
        b'3' => Ok(RequirementLevel::Specialist),
        b'4' => Ok(RequirementLevel::Expert),
        _ => Err(TightnessError::InvalidOccupation(occupation.to_string())),
    }
}

/// Published yearly shares of all vacancies that are registered, by level
/// (helper, professional, specialist and expert).
pub const REFERENCE_SHARES: [(i32, [f64; 3]); 8] = [
    (2012, [0.360, 0.450, 0.336]),
    (2013, [0.442, 0.470, 0.257]),
    (2014, [0.480, 0.419, 0.299]),
    (2015, [0.481, 0.465, 0.293]),
    (2016, [0.533, 0.505, 0.367]),
    (2017, [0.522, 0.464, 0.312]),
    (2018, [0.439, 0.462, 0.328]),
    (2019, [0.432, 0.415, 0.314]),
];

/// Averages of [`REFERENCE_SHARES`] over 2012–2019.
pub const REFERENCE_AVERAGE_SHARES: [f64; 3] = [0.461, 0.456, 0.313];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NotificationShares {
    shares: BTreeMap<(i32, NotificationLevel), f64>,
}

impl NotificationShares {
    pub fn insert(&mut self, year: i32, level: NotificationLevel, share: f64) -> Result<(), TightnessError> {
        if !(share > 0.0 && share <= 1.0) {
            return Err(TightnessError::InvalidShare { year, level: level.label().into(), share });
        }
        if self.shares.insert((year, level), share).is_some() {
            return Err(TightnessError::Duplicate(format!("notification share for {} in {year}", level.label())));
        }
        Ok(())
    }

    pub fn from_records(records: &[NotificationShareRecord]) -> Result<Self, TightnessError> {
        let mut out = Self::default();
        for r in records {
            out.insert(r.year, NotificationLevel::parse(&r.level)?, r.share)?;
        }
        Ok(out)
    }

    /// The published 2012–2019 table.
    pub fn reference() -> Self {
        let mut out = Self::default();
        for (year, row) in REFERENCE_SHARES {
            for (level, share) in NotificationLevel::ALL.into_iter().zip(row) {
                out.insert(year, level, share).expect("reference shares are valid");
            }
        }
        out
    }

    pub fn get(&self, year: i32, level: NotificationLevel) -> Result<f64, TightnessError> {
        self.shares
            .get(&(year, level))
            .copied()
            .ok_or_else(|| TightnessError::MissingShare { year, level: level.label().into() })
    }

    pub fn to_records(&self) -> Vec<NotificationShareRecord> {
        self.shares
            .iter()
            .map(|(&(year, level), &share)| NotificationShareRecord { year, level: level.label().into(), share })
            .collect()
    }
}

/// Registered vacancies divided by the notification share.
pub fn total_vacancies(
    registered: f64,
    shares: &NotificationShares,
    year: i32,
    level: NotificationLevel,
) -> Result<f64, TightnessError> {
    Ok(registered / shares.get(year, level)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCell {
    pub occupation: String,
    pub region: u64,
    pub year: i32,
    pub registered_vacancies: f64,
    pub total_vacancies: f64,
    pub job_seekers: f64,
}

/// `V/U`; undefined when there are no job seekers.
pub fn market_tightness(cell: &MarketCell) -> Result<f64, TightnessError> {
    if cell.job_seekers > 0.0 {
        Ok(cell.total_vacancies / cell.job_seekers)
    } else {
        Err(TightnessError::Undefined { occupation: cell.occupation.clone(), region: cell.region, year: cell.year })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmTightness {
    /// `None` when no occupation with positive share has a defined ratio.
    pub value: Option<f64>,
    /// Share mass on occupations whose ratio is undefined; the remaining
    /// shares are renormalized.
    pub dropped_share: f64,
}

/// `Σ_o share_o · ratio_o` over `(share, ratio)` pairs, in input order.
pub fn firm_tightness(components: &[(f64, Option<f64>)]) -> FirmTightness {
    let mut kept = 0.0;
    let mut dropped = 0.0;
    let mut sum = 0.0;
    for &(share, ratio) in components {
        match ratio {
            Some(r) => {
                kept += share;
                sum += share * r;
            }
            None => dropped += share,
        }
    }
    let total = kept + dropped;
    FirmTightness {
        value: (kept > 0.0).then(|| sum / kept),
        dropped_share: if total > 0.0 { dropped / total } else { 0.0 },
    }
}

/// Pooled yearly occupation transition probabilities and occupation sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub occupations: Vec<String>,
    /// `prob[o][h] = P(h | o)`.
    pub prob: Vec<Vec<f64>>,
    pub employment: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(occupations: Vec<String>, prob: Vec<Vec<f64>>, employment: Vec<f64>) -> Result<Self, TightnessError> {
        for (o, row) in occupations.iter().zip(&prob) {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(TightnessError::RowSum { occupation: o.clone(), sum });
            }
        }
        Ok(Self { occupations, prob, employment })
    }

    /// Builds the matrix over the occupations listed in `employment`;
    /// missing pairs are zero.
    pub fn from_records(
        transitions: &[TransitionRecord],
        employment: &[OccupationEmploymentRecord],
    ) -> Result<Self, TightnessError> {
        let mut occupations: Vec<String> = employment.iter().map(|e| e.occupation.clone()).collect();
        occupations.sort();
        if let Some(w) = occupations.windows(2).find(|w| w[0] == w[1]) {
            return Err(TightnessError::Duplicate(format!("employment for occupation {}", w[0])));
        }
        let index = |code: &str| {
            occupations
                .binary_search_by(|c| c.as_str().cmp(code))
                .map_err(|_| TightnessError::UnknownOccupation(code.to_string()))
        };
        let n = occupations.len();
        let mut prob = vec![vec![0.0; n]; n];
        let mut seen = BTreeSet::new();
        for t in transitions {
            let (o, h) = (index(&t.from_occupation)?, index(&t.to_occupation)?);
            if !seen.insert((o, h)) {
                return Err(TightnessError::Duplicate(format!(
                    "transition {} -> {}",
                    t.from_occupation, t.to_occupation
                )));
            }
            prob[o][h] = t.probability;
        }
        let mut emp = vec![0.0; n];
        for e in employment {
            emp[index(&e.occupation)?] = e.employment;
        }
        Self::new(occupations, prob, emp)
    }

    pub fn index_of(&self, occupation: &str) -> Option<usize> {
        self.occupations.iter().position(|o| o == occupation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowWeights {
    pub occupations: Vec<String>,
    /// `weights[o][h] = ω_oh`.
    pub weights: Vec<Vec<f64>>,
}

impl FlowWeights {
    pub fn index_of(&self, occupation: &str) -> Option<usize> {
        self.occupations.iter().position(|o| o == occupation)
    }
}

/// `ω_oh = (P(h|o)/P(o|o))·(L_o/L_h)`, with `ω_oo = 1`. Weights above
/// `warn_above` are logged.
pub fn flow_weights(tm: &TransitionMatrix, warn_above: f64) -> Result<FlowWeights, TightnessError> {
    let n = tm.occupations.len();
    for (h, &l) in tm.employment.iter().enumerate() {
        if !(l > 0.0) {
            return Err(TightnessError::ZeroEmployment(tm.occupations[h].clone()));
        }
    }
    let mut weights = vec![vec![0.0; n]; n];
    for o in 0..n {
        let stay = tm.prob[o][o];
        if !(stay > 0.0) {
            return Err(TightnessError::ZeroStay(tm.occupations[o].clone()));
        }
        for h in 0..n {
            let w = if h == o { 1.0 } else { (tm.prob[o][h] / stay) * (tm.employment[o] / tm.employment[h]) };
            if w > warn_above {
                warn!("flow weight {} -> {} is {w:.3}", tm.occupations[o], tm.occupations[h]);
            }
            weights[o][h] = w;
        }
    }
    Ok(FlowWeights { occupations: tm.occupations.clone(), weights })
}

/// `Ṽ_o = Σ_h ω_oh V_h` and `Ũ_o = Σ_h ω_oh U_h` within one region-year.
/// `index[k]` is the weight-matrix position of the `k`-th stock.
pub fn flow_adjusted_stocks(weights: &FlowWeights, index: &[usize], v: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let adjust = |x: &[f64]| -> Vec<f64> {
        index
            .iter()
            .map(|&o| index.iter().zip(x).fold(0.0, |acc, (&h, xh)| acc + weights.weights[o][h] * xh))
            .collect()
    };
    (adjust(v), adjust(u))
}

/// Firm tightness from flow-adjusted stocks `(share, Ṽ, Ũ)`.
pub fn flow_adjusted_firm_tightness(components: &[(f64, f64, f64)]) -> FirmTightness {
    let pairs: Vec<(f64, Option<f64>)> = components
        .iter()
        .map(|&(s, v, u)| (s, (u > 0.0).then(|| v / u)))
        .collect();
    firm_tightness(&pairs)
}

/// How raw market records become tightness cells.
#[derive(Debug, Clone, Default)]
pub struct MarketAdjustment<'a> {
    pub notification: Option<&'a NotificationShares>,
    pub flows: Option<&'a FlowWeights>,
    /// Region → zone; markets are summed within zones when present.
    pub zones: Option<&'a BTreeMap<u64, u64>>,
}

/// Grosses up, optionally aggregates to zones, and flow-adjusts market
/// stocks. Output is ordered by `(year, region, occupation)`; the `region`
/// column holds the zone when zones are given.
pub fn adjust_markets(
    markets: &[MarketRecord],
    adj: &MarketAdjustment<'_>,
) -> Result<Vec<AdjustedMarketRecord>, TightnessError> {
    // (year, region, occupation) → (registered, total, seekers)
    let mut cells: BTreeMap<(i32, u64, String), (f64, f64, f64)> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for m in markets {
        if !seen.insert((m.year, m.region, m.occupation.as_str())) {
            return Err(TightnessError::Duplicate(format!(
                "market cell {} / region {} / {}",
                m.occupation, m.region, m.year
            )));
        }
        let level = requirement_level(&m.occupation)?.pooled();
        let total = match adj.notification {
            Some(shares) => total_vacancies(m.registered_vacancies, shares, m.year, level)?,
            None => m.registered_vacancies,
        };
        let region = match adj.zones {
            Some(z) => *z.get(&m.region).ok_or(TightnessError::UnassignedRegion(m.region))?,
            None => m.region,
        };
        let slot = cells.entry((m.year, region, m.occupation.clone())).or_default();
        slot.0 += m.registered_vacancies;
        slot.1 += total;
        slot.2 += m.job_seekers;
    }

    let mut out = Vec::with_capacity(cells.len());
    let mut groups: BTreeMap<(i32, u64), Vec<(String, (f64, f64, f64))>> = BTreeMap::new();
    for ((year, region, occ), stocks) in cells {
        groups.entry((year, region)).or_default().push((occ, stocks));
    }
    for ((year, region), group) in groups {
        let (adj_v, adj_u) = match adj.flows {
            Some(w) => {
                let index = group
                    .iter()
                    .map(|(o, _)| w.index_of(o).ok_or_else(|| TightnessError::UnknownOccupation(o.clone())))
                    .collect::<Result<Vec<_>, _>>()?;
                let v: Vec<f64> = group.iter().map(|(_, s)| s.1).collect();
                let u: Vec<f64> = group.iter().map(|(_, s)| s.2).collect();
                flow_adjusted_stocks(w, &index, &v, &u)
            }
            None => (group.iter().map(|(_, s)| s.1).collect(), group.iter().map(|(_, s)| s.2).collect()),
        };
        for (k, (occupation, (reg, total, seekers))) in group.into_iter().enumerate() {
            let (av, au) = (adj_v[k], adj_u[k]);
            out.push(AdjustedMarketRecord {
                occupation,
                region,
                year,
                registered_vacancies: reg,
                share_used: if total > 0.0 { reg / total } else { 1.0 },
                total_vacancies: total,
                job_seekers: seekers,
                adjusted_vacancies: av,
                adjusted_job_seekers: au,
                tightness: (au > 0.0).then(|| av / au),
            });
        }
    }
    Ok(out)
}

/// Firm-year employment, average wage and tightness from long-format firm
/// records and adjusted markets. Rows are ordered by `(firm_id, year)`.
pub fn firm_tightness_panel(
    firms: &[FirmRecord],
    markets: &[AdjustedMarketRecord],
    zones: Option<&BTreeMap<u64, u64>>,
) -> Result<Vec<FirmTightnessRecord>, TightnessError> {
    let ratio: BTreeMap<(i32, u64, &str), Option<f64>> = markets
        .iter()
        .map(|m| ((m.year, m.region, m.occupation.as_str()), m.tightness))
        .collect();
    let mut region_of: BTreeMap<u64, u64> = BTreeMap::new();
    let mut groups: BTreeMap<(u64, i32), Vec<&FirmRecord>> = BTreeMap::new();
    for r in firms {
        if let Some(&first) = region_of.get(&r.firm_id) {
            if first != r.region {
                return Err(TightnessError::MultiRegionFirm { firm_id: r.firm_id, first, second: r.region });
            }
        } else {
            region_of.insert(r.firm_id, r.region);
        }
        groups.entry((r.firm_id, r.year)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    let mut missing_mass = 0usize;
    for ((firm_id, year), rows) in groups {
        let region = rows[0].region;
        let market_region = match zones {
            Some(z) => *z.get(&region).ok_or(TightnessError::UnassignedRegion(region))?,
            None => region,
        };
        let employment: f64 = rows.iter().map(|r| r.employment).sum();
        let wage_bill: f64 = rows.iter().map(|r| r.employment * r.wage_daily).sum();
        let components: Vec<(f64, Option<f64>)> = rows
            .iter()
            .map(|r| {
                let share = if employment > 0.0 { r.employment / employment } else { 0.0 };
                let ratio = ratio.get(&(year, market_region, r.occupation.as_str())).copied().flatten();
                (share, ratio)
            })
            .collect();
        let ft = firm_tightness(&components);
        if ft.dropped_share > 0.0 {
            missing_mass += 1;
        }
        out.push(FirmTightnessRecord {
            firm_id,
            year,
            region,
            employment,
            wage: if employment > 0.0 { wage_bill / employment } else { f64::NAN },
            tightness: ft.value,
            dropped_share: ft.dropped_share,
        });
    }
    if missing_mass > 0 {
        warn!("{missing_mass} firm-years have employment on occupations without a defined tightness");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requirement_digits() {
        assert_eq!(requirement_level("71402").unwrap(), RequirementLevel::Professional);
        assert_eq!(requirement_level("71403").unwrap().pooled(), NotificationLevel::SpecialistExpert);
        assert!(requirement_level("71409").is_err());
        assert!(requirement_level("7140").is_err());
    }

    #[test]
    fn grossing_up() {
        let mut s = NotificationShares::default();
        s.insert(2015, NotificationLevel::Helper, 0.461).unwrap();
        s.insert(2015, NotificationLevel::Professional, 1.0).unwrap();
        assert!((total_vacancies(46.1, &s, 2015, NotificationLevel::Helper).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(total_vacancies(7.0, &s, 2015, NotificationLevel::Professional).unwrap(), 7.0);
        assert_eq!(total_vacancies(0.0, &s, 2015, NotificationLevel::Helper).unwrap(), 0.0);
        assert!(total_vacancies(1.0, &s, 2016, NotificationLevel::Helper).is_err());
        assert!(s.insert(2016, NotificationLevel::Helper, 0.0).is_err());
    }

    #[test]
    fn reference_averages_match_table() {
        let r = NotificationShares::reference();
        for (k, level) in NotificationLevel::ALL.into_iter().enumerate() {
            let mean: f64 = (2012..=2019).map(|y| r.get(y, level).unwrap()).sum::<f64>() / 8.0;
            assert!((mean - REFERENCE_AVERAGE_SHARES[k]).abs() < 1e-3, "{mean}");
        }
    }

    #[test]
    fn market_ratio() {
        let cell = |v: f64, u: f64| MarketCell {
            occupation: "71402".into(),
            region: 1,
            year: 2019,
            registered_vacancies: v,
            total_vacancies: v,
            job_seekers: u,
        };
        assert_eq!(market_tightness(&cell(4.0, 2.0)).unwrap(), 2.0);
        assert_eq!(market_tightness(&cell(0.0, 5.0)).unwrap(), 0.0);
        assert!(market_tightness(&cell(1.0, 0.0)).is_err());
        let agg = market_tightness(&cell(1_999_790.0, 4_226_751.0)).unwrap();
        assert!((agg - 0.473).abs() < 5e-4);
    }

    #[test]
    fn firm_ratio_examples() {
        assert_eq!(firm_tightness(&[(1.0, Some(0.5))]).value, Some(0.5));
        assert_eq!(firm_tightness(&[(0.5, Some(1.0)), (0.5, Some(3.0))]).value, Some(2.0));
        let partial = firm_tightness(&[(0.25, None), (0.75, Some(2.0))]);
        assert_eq!(partial.value, Some(2.0));
        assert_eq!(partial.dropped_share, 0.25);
        assert_eq!(firm_tightness(&[(1.0, None)]).value, None);
    }

    #[test]
    fn two_occupation_weights() {
        let tm = TransitionMatrix::new(
            vec!["10001".into(), "10012".into()],
            vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            vec![100.0, 100.0],
        )
        .unwrap();
        let w = flow_weights(&tm, f64::INFINITY).unwrap();
        assert_eq!(w.weights[0][0], 1.0);
        assert!((w.weights[0][1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn weight_errors_name_occupation() {
        let tm = TransitionMatrix::new(
            vec!["10001".into(), "10012".into()],
            vec![vec![0.0, 1.0], vec![0.2, 0.8]],
            vec![100.0, 100.0],
        )
        .unwrap();
        assert_eq!(flow_weights(&tm, 10.0).unwrap_err(), TightnessError::ZeroStay("10001".into()));
        assert!(TransitionMatrix::new(vec!["10001".into()], vec![vec![0.9]], vec![1.0]).is_err());
    }

    #[test]
    fn multi_region_firm_rejected() {
        let rec = |region| FirmRecord {
            firm_id: 1,
            year: 2012,
            occupation: "10001".into(),
            region,
            employment: 1.0,
            wage_daily: 1.0,
        };
        let err = firm_tightness_panel(&[rec(1), rec(2)], &[], None).unwrap_err();
        assert!(matches!(err, TightnessError::MultiRegionFirm { .. }));
    }
}
