use std::collections::{BTreeMap, HashMap};

use super::{Dataset, EstimationError};

/// Panel in levels keyed by `(unit, year)`.
///
/// `log_vars` are differenced in logs into `dln_<name>`, `level_vars` in
/// levels into `d_<name>`. `carried` columns and `carried_keys` are copied
/// from the later row unchanged (instruments already in differences, region,
/// industry).
#[derive(Debug, Clone, Default)]
pub struct LevelPanel {
    pub unit: Vec<u64>,
    pub year: Vec<i32>,
    pub log_vars: BTreeMap<String, Vec<f64>>,
    pub level_vars: BTreeMap<String, Vec<f64>>,
    pub carried: BTreeMap<String, Vec<f64>>,
    pub carried_keys: BTreeMap<String, Vec<u64>>,
}

#[derive(Debug, Clone)]
pub struct Differenced {
    /// Keys `unit` and `year` plus carried keys.
    pub data: Dataset,
    /// Rows without an observation `lag` years earlier.
    pub dropped: usize,
    pub lag: i32,
}

impl LevelPanel {
    pub fn new(unit: Vec<u64>, year: Vec<i32>) -> Result<Self, EstimationError> {
        if unit.len() != year.len() {
            return Err(EstimationError::LengthMismatch { name: "year".into(), got: year.len(), expected: unit.len() });
        }
        Ok(Self { unit, year, ..Default::default() })
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }

    fn check(&self, name: &str, got: usize) -> Result<(), EstimationError> {
        if got != self.len() {
            return Err(EstimationError::LengthMismatch { name: name.into(), got, expected: self.len() });
        }
        Ok(())
    }

    pub fn log_var(mut self, name: &str, values: Vec<f64>) -> Result<Self, EstimationError> {
        self.check(name, values.len())?;
        self.log_vars.insert(name.into(), values);
        Ok(self)
    }

    pub fn level_var(mut self, name: &str, values: Vec<f64>) -> Result<Self, EstimationError> {
        self.check(name, values.len())?;
        self.level_vars.insert(name.into(), values);
        Ok(self)
    }

    pub fn carry(mut self, name: &str, values: Vec<f64>) -> Result<Self, EstimationError> {
        self.check(name, values.len())?;
        self.carried.insert(name.into(), values);
        Ok(self)
    }

    pub fn carry_key(mut self, name: &str, values: Vec<u64>) -> Result<Self, EstimationError> {
        self.check(name, values.len())?;
        self.carried_keys.insert(name.into(), values);
        Ok(self)
    }
}

/// `x_it − x_{i,t−lag}` (in logs or levels) for every row that has a lagged
/// partner. Output rows are ordered by `(unit, year)`. Log differences of
/// non-positive values come out as NaN and are dropped by the estimators.
pub fn first_difference(panel: &LevelPanel, lag: i32) -> Result<Differenced, EstimationError> {
    if lag < 1 {
        return Err(EstimationError::Invalid(format!("lag must be at least 1, got {lag}")));
    }
    let mut index: HashMap<(u64, i32), usize> = HashMap::with_capacity(panel.len());
    for (i, (&u, &t)) in panel.unit.iter().zip(&panel.year).enumerate() {
        if index.insert((u, t), i).is_some() {
            return Err(EstimationError::Invalid(format!("duplicate row for unit {u} in year {t}")));
        }
    }
    let mut order: Vec<usize> = (0..panel.len()).collect();
    order.sort_by_key(|&i| (panel.unit[i], panel.year[i]));
    let pairs: Vec<(usize, usize)> = order
        .iter()
        .filter_map(|&i| {
            index
                .get(&(panel.unit[i], panel.year[i] - lag))
                .map(|&j| (i, j))
        })
        .collect();
    let n = pairs.len();
    let mut data = Dataset::new(n);
    data.add_key("unit", pairs.iter().map(|&(i, _)| panel.unit[i]).collect())?;
    data.add_key("year", pairs.iter().map(|&(i, _)| panel.year[i] as i64 as u64).collect())?;
    for (name, v) in &panel.log_vars {
        let d = pairs
            .iter()
            .map(|&(i, j)| {
                if v[i] > 0.0 && v[j] > 0.0 {
                    v[i].ln() - v[j].ln()
                } else {
                    f64::NAN
                }
            })
            .collect();
        data.add_column(format!("dln_{name}"), d)?;
    }
    for (name, v) in &panel.level_vars {
        data.add_column(format!("d_{name}"), pairs.iter().map(|&(i, j)| v[i] - v[j]).collect())?;
    }
    for (name, v) in &panel.carried {
        data.add_column(name.clone(), pairs.iter().map(|&(i, _)| v[i]).collect())?;
    }
    for (name, v) in &panel.carried_keys {
        data.add_key(name.clone(), pairs.iter().map(|&(i, _)| v[i]).collect())?;
    }
    Ok(Differenced { data, dropped: panel.len() - n, lag })
}
