//! Base-year exposure shares and shift-share (Bartik) instruments.
//!
//! A unit's instrument in year `t` is `Σ_o s_o · g_ot`: its base-year
//! occupation shares times national log growth of an occupation-level
//! series over the estimation lag. National series are aggregated over
//! regions before taking logs.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::BartikComponent;
use crate::io::{AdjustedMarketRecord, FirmRecord, InstrumentRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShiftShareError {
    #[error("lag must be at least 1, got {0}")]
    InvalidLag(i32),
    #[error("missing-share cap must lie in [0, 1), got {0}")]
    InvalidCap(f64),
    #[error("estimation window starts in {start}, not after the base year {base}")]
    WindowBeforeBase { base: i32, start: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseYearRule {
    /// Shares come from the first year at or after this one.
    pub base_year: i32,
    /// First estimation year; units first observed here or later are excluded.
    pub estimation_start: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    FirstObservedInEstimationWindow,
    NoEmploymentFromBaseYear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitShares {
    pub base_year: i32,
    pub shares: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseShares {
    pub units: BTreeMap<u64, UnitShares>,
    pub excluded: BTreeMap<u64, ExclusionReason>,
}

/// Base-year shares from `(unit, year, occupation, employment)` rows.
pub fn base_shares_from<'a>(
    rows: impl IntoIterator<Item = (u64, i32, &'a str, f64)>,
    rule: &BaseYearRule,
) -> Result<BaseShares, ShiftShareError> {
    if rule.estimation_start <= rule.base_year {
        return Err(ShiftShareError::WindowBeforeBase { base: rule.base_year, start: rule.estimation_start });
    }
    // unit → year → occupation → employment, only years from the base year on
    let mut by_unit: BTreeMap<u64, BTreeMap<i32, BTreeMap<String, f64>>> = BTreeMap::new();
    let mut all_units = BTreeSet::new();
    for (unit, year, occ, emp) in rows {
        all_units.insert(unit);
        if year < rule.base_year {
            continue;
        }
        *by_unit.entry(unit).or_default().entry(year).or_default().entry(occ.to_string()).or_default() += emp;
    }
    let mut out = BaseShares::default();
    for unit in all_units {
        let first = by_unit
            .get(&unit)
            .and_then(|years| years.iter().find(|(_, occs)| occs.values().sum::<f64>() > 0.0));
        match first {
            None => {
                out.excluded.insert(unit, ExclusionReason::NoEmploymentFromBaseYear);
            }
            Some((&year, _)) if year >= rule.estimation_start => {
                out.excluded.insert(unit, ExclusionReason::FirstObservedInEstimationWindow);
            }
            Some((&year, occs)) => {
                let total: f64 = occs.values().sum();
                let shares = occs.iter().filter(|(_, e)| **e > 0.0).map(|(o, e)| (o.clone(), e / total)).collect();
                out.units.insert(unit, UnitShares { base_year: year, shares });
            }
        }
    }
    Ok(out)
}

/// Firm base-year shares.
pub fn base_year_shares(firms: &[FirmRecord], rule: &BaseYearRule) -> Result<BaseShares, ShiftShareError> {
    base_shares_from(firms.iter().map(|r| (r.firm_id, r.year, r.occupation.as_str(), r.employment)), rule)
}

/// Region base-year shares, for regional exposure.
pub fn region_base_shares(firms: &[FirmRecord], rule: &BaseYearRule) -> Result<BaseShares, ShiftShareError> {
    base_shares_from(firms.iter().map(|r| (r.region, r.year, r.occupation.as_str(), r.employment)), rule)
}

/// National log growth per `(occupation, year)` over `lag` years.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NationalGrowth {
    pub lag: i32,
    pub growth: BTreeMap<(String, i32), f64>,
}

impl NationalGrowth {
    pub fn get(&self, occupation: &str, year: i32) -> Option<f64> {
        self.growth.get(&(occupation.to_string(), year)).copied()
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.growth.keys().map(|(_, y)| *y).collect()
    }
}

/// Sums `(occupation, year, value)` over everything else (regions).
pub fn national_levels<'a>(rows: impl IntoIterator<Item = (&'a str, i32, f64)>) -> BTreeMap<(String, i32), f64> {
    let mut out: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for (occ, year, v) in rows {
        *out.entry((occ.to_string(), year)).or_default() += v;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WageWeighting {
    #[default]
    Employment,
    Unweighted,
}

/// National average daily wage per occupation and year across firms.
pub fn national_wage_levels(firms: &[FirmRecord], weighting: WageWeighting) -> BTreeMap<(String, i32), f64> {
    let mut acc: BTreeMap<(String, i32), (f64, f64)> = BTreeMap::new();
    for r in firms {
        let w = match weighting {
            WageWeighting::Employment => r.employment,
            WageWeighting::Unweighted => 1.0,
        };
        if w <= 0.0 {
            continue;
        }
        let slot = acc.entry((r.occupation.clone(), r.year)).or_default();
        slot.0 += w * r.wage_daily;
        slot.1 += w;
    }
    acc.into_iter().map(|(k, (sw, w))| (k, sw / w)).collect()
}

/// `ln X_ot − ln X_{o,t−lag}` wherever both levels are positive.
pub fn national_growth(levels: &BTreeMap<(String, i32), f64>, lag: i32) -> Result<NationalGrowth, ShiftShareError> {
    if lag < 1 {
        return Err(ShiftShareError::InvalidLag(lag));
    }
    let mut growth = BTreeMap::new();
    for ((occ, year), &x) in levels {
        if let Some(&x0) = levels.get(&(occ.clone(), year - lag)) {
            if x > 0.0 && x0 > 0.0 {
                growth.insert((occ.clone(), *year), x.ln() - x0.ln());
            }
        }
    }
    Ok(NationalGrowth { lag, growth })
}

/// Instrument values per `(unit, year)` for every growth year after the
/// unit's base year. When occupations holding at most `missing_cap` of the
/// share mass lack growth, the remaining shares are renormalized; beyond
/// the cap the value is `None`.
pub fn bartik(
    shares: &BaseShares,
    growth: &NationalGrowth,
    missing_cap: f64,
) -> Result<BTreeMap<(u64, i32), Option<f64>>, ShiftShareError> {
    if !(0.0..1.0).contains(&missing_cap) {
        return Err(ShiftShareError::InvalidCap(missing_cap));
    }
    let years = growth.years();
    let mut out = BTreeMap::new();
    let mut dropped = 0usize;
    for (&unit, us) in &shares.units {
        for &year in years.iter().filter(|&&y| y > us.base_year) {
            let mut sum = 0.0;
            let mut missing = 0.0;
            for (occ, &s) in &us.shares {
                match growth.get(occ, year) {
                    Some(g) => sum += s * g,
                    None => missing += s,
                }
            }
            let value = if missing <= missing_cap {
                Some(if missing > 0.0 { sum / (1.0 - missing) } else { sum })
            } else {
                dropped += 1;
                None
            };
            out.insert((unit, year), value);
        }
    }
    if dropped > 0 {
        warn!("{dropped} unit-years exceed the missing-growth share cap of {missing_cap}");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSettings {
    pub lag: i32,
    pub wage_weighting: WageWeighting,
    pub missing_cap: f64,
}

impl Default for InstrumentSettings {
    fn default() -> Self {
        Self { lag: 2, wage_weighting: WageWeighting::Employment, missing_cap: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSet {
    pub shares: BaseShares,
    pub wage_growth: NationalGrowth,
    pub vacancy_growth: NationalGrowth,
    pub seeker_growth: NationalGrowth,
    pub records: Vec<InstrumentRecord>,
}

/// The wage, vacancy and job-seeker instruments for every firm-year.
/// Vacancy and job-seeker levels are national sums of grossed-up stocks.
pub fn firm_instruments(
    firms: &[FirmRecord],
    markets: &[AdjustedMarketRecord],
    rule: &BaseYearRule,
    settings: &InstrumentSettings,
) -> Result<InstrumentSet, ShiftShareError> {
    let shares = base_year_shares(firms, rule)?;
    let wage_growth = national_growth(&national_wage_levels(firms, settings.wage_weighting), settings.lag)?;
    let vacancy_growth = national_growth(
        &national_levels(markets.iter().map(|m| (m.occupation.as_str(), m.year, m.total_vacancies))),
        settings.lag,
    )?;
    let seeker_growth = national_growth(
        &national_levels(markets.iter().map(|m| (m.occupation.as_str(), m.year, m.job_seekers))),
        settings.lag,
    )?;
    let zw = bartik(&shares, &wage_growth, settings.missing_cap)?;
    let zv = bartik(&shares, &vacancy_growth, settings.missing_cap)?;
    let zu = bartik(&shares, &seeker_growth, settings.missing_cap)?;
    let keys: BTreeSet<(u64, i32)> = zw.keys().chain(zv.keys()).chain(zu.keys()).copied().collect();
    let records = keys
        .into_iter()
        .map(|(firm_id, year)| InstrumentRecord {
            firm_id,
            year,
            base_year: shares.units[&firm_id].base_year,
            z_w: zw.get(&(firm_id, year)).copied().flatten(),
            z_v: zv.get(&(firm_id, year)).copied().flatten(),
            z_u: zu.get(&(firm_id, year)).copied().flatten(),
        })
        .collect();
    Ok(InstrumentSet { shares, wage_growth, vacancy_growth, seeker_growth, records })
}

/// One component per `(occupation, year)` with exposure
/// `s_io · 1{year_i = year}` over the given dataset rows.
pub fn rotemberg_components(
    shares: &BaseShares,
    growth: &NationalGrowth,
    units: &[u64],
    years: &[i32],
) -> Vec<BartikComponent> {
    let row_years: BTreeSet<i32> = years.iter().copied().collect();
    let mut out = Vec::new();
    for ((occ, year), &g) in &growth.growth {
        if !row_years.contains(year) {
            continue;
        }
        let exposure: Vec<f64> = units
            .iter()
            .zip(years)
            .map(|(u, y)| {
                if y != year {
                    return 0.0;
                }
                shares.units.get(u).and_then(|s| s.shares.get(occ)).copied().unwrap_or(0.0)
            })
            .collect();
        if exposure.iter().any(|&e| e != 0.0) {
            out.push(BartikComponent { label: occ.clone(), period: *year, growth: g, exposure });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(firm: u64, year: i32, occ: &str, emp: f64) -> FirmRecord {
        FirmRecord { firm_id: firm, year, occupation: occ.into(), region: 1, employment: emp, wage_daily: 100.0 }
    }

    const RULE: BaseYearRule = BaseYearRule { base_year: 2012, estimation_start: 2014 };

    #[test]
    fn base_year_and_birth_year() {
        let firms = vec![
            rec(1, 2012, "10001", 3.0),
            rec(1, 2012, "10012", 1.0),
            rec(1, 2013, "10001", 10.0),
            rec(2, 2013, "10012", 5.0),
            rec(3, 2015, "10001", 5.0),
        ];
        let s = base_year_shares(&firms, &RULE).unwrap();
        assert_eq!(s.units[&1].base_year, 2012);
        assert_eq!(s.units[&1].shares["10001"], 0.75);
        assert_eq!(s.units[&2].base_year, 2013);
        assert_eq!(s.units[&2].shares["10012"], 1.0);
        assert_eq!(s.excluded[&3], ExclusionReason::FirstObservedInEstimationWindow);
    }

    #[test]
    fn growth_examples() {
        let mut levels = BTreeMap::new();
        levels.insert(("10001".to_string(), 2012), 5.0);
        levels.insert(("10001".to_string(), 2014), 5.0);
        levels.insert(("10012".to_string(), 2012), 2.0);
        levels.insert(("10012".to_string(), 2014), 4.0);
        let g = national_growth(&levels, 2).unwrap();
        assert_eq!(g.get("10001", 2014), Some(0.0));
        assert!((g.get("10012", 2014).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g.get("10012", 2012), None);
        assert!(national_growth(&levels, 0).is_err());
    }

    #[test]
    fn national_levels_sum_regions_first() {
        let rows = vec![("10001", 2012, 1.0), ("10001", 2012, 3.0), ("10001", 2013, 8.0)];
        let l = national_levels(rows);
        assert_eq!(l[&("10001".to_string(), 2012)], 4.0);
    }

    #[test]
    fn missing_growth_cap() {
        let mut units = BTreeMap::new();
        units.insert(
            1,
            UnitShares { base_year: 2012, shares: [("a".to_string(), 0.97), ("b".to_string(), 0.03)].into() },
        );
        units.insert(
            2,
            UnitShares { base_year: 2012, shares: [("a".to_string(), 0.5), ("b".to_string(), 0.5)].into() },
        );
        let shares = BaseShares { units, excluded: BTreeMap::new() };
        let growth = NationalGrowth { lag: 2, growth: [(("a".to_string(), 2014), 0.1)].into() };
        let z = bartik(&shares, &growth, 0.05).unwrap();
        assert!((z[&(1, 2014)].unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(z[&(2, 2014)], None);
        assert!(bartik(&shares, &growth, 1.0).is_err());
    }

    #[test]
    fn unweighted_wage_switch() {
        let mut firms = vec![rec(1, 2012, "10001", 3.0), rec(2, 2012, "10001", 1.0)];
        firms[1].wage_daily = 200.0;
        let w = national_wage_levels(&firms, WageWeighting::Employment);
        assert_eq!(w[&("10001".to_string(), 2012)], 125.0);
        let u = national_wage_levels(&firms, WageWeighting::Unweighted);
        assert_eq!(u[&("10001".to_string(), 2012)], 150.0);
    }
}
