//! Fixed-effect absorption by (weighted) within-group demeaning.
//!
//! A single fixed-effect dimension is swept out exactly in one pass. Several
//! dimensions are handled by alternating projections until the largest update
//! falls below a tolerance relative to the column scale.

use std::collections::HashMap;

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 10_000;
const SWEEP_TOL: f64 = 1e-13;

/// Group codes for one fixed-effect dimension, densely renumbered `0..levels`.
#[derive(Debug, Clone)]
pub(crate) struct Groups {
    pub codes: Vec<usize>,
    pub levels: usize,
}

impl Groups {
    pub fn from_keys(keys: &[u64]) -> Self {
        let mut map: HashMap<u64, usize> = HashMap::new();
        let codes = keys
            .iter()
            .map(|k| {
                let next = map.len();
                *map.entry(*k).or_insert(next)
            })
            .collect();
        Groups { codes, levels: map.len() }
    }
}

fn demean_once(col: &mut [f64], groups: &Groups, weights: &[f64]) -> f64 {
    let mut sums = vec![0.0; groups.levels];
    let mut wsum = vec![0.0; groups.levels];
    for ((v, &g), &w) in col.iter().zip(&groups.codes).zip(weights) {
        sums[g] += w * v;
        wsum[g] += w;
    }
    let mut max_shift: f64 = 0.0;
    for (v, &g) in col.iter_mut().zip(&groups.codes) {
        let m = if wsum[g] > 0.0 { sums[g] / wsum[g] } else { 0.0 };
        *v -= m;
        max_shift = max_shift.max(m.abs());
    }
    max_shift
}

/// Demeans every column of `m` in place. Returns the number of sweeps used.
pub(crate) fn absorb(m: &mut DMatrix<f64>, dims: &[Groups], weights: &[f64]) -> usize {
    if dims.is_empty() {
        return 0;
    }
    let mut sweeps_used = 1;
    for j in 0..m.ncols() {
        let mut col: Vec<f64> = m.column(j).iter().copied().collect();
        let scale = col.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        if dims.len() == 1 {
            demean_once(&mut col, &dims[0], weights);
        } else {
            for sweep in 1..=MAX_SWEEPS {
                let mut shift: f64 = 0.0;
                for d in dims {
                    shift = shift.max(demean_once(&mut col, d, weights));
                }
                sweeps_used = sweeps_used.max(sweep);
                if shift <= SWEEP_TOL * scale {
                    break;
                }
            }
        }
        m.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    sweeps_used
}

/// Degrees of freedom absorbed by the fixed effects. For several dimensions
/// this assumes the group graph is connected (one redundant level per extra
/// dimension).
pub(crate) fn absorbed_dof(dims: &[Groups]) -> usize {
    if dims.is_empty() {
        return 0;
    }
    let total: usize = dims.iter().map(|d| d.levels).sum();
    total - (dims.len() - 1)
}
