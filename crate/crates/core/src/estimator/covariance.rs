use nalgebra::{DMatrix, DVector};

use super::linalg::symmetrize;
use super::{Covariance, EstimationError};

/// Everything needed to turn a bread matrix and residuals into a covariance.
pub(crate) struct CovarianceInput<'a> {
    pub kind: &'a Covariance,
    /// Dense cluster codes (only for [`Covariance::Cluster`]).
    pub clusters: Option<&'a [usize]>,
    pub n_clusters: usize,
    /// Regressors plus absorbed fixed-effect levels.
    pub k_total: usize,
    pub small_sample: bool,
}

/// `bread · meat · bread` with `meat` built from `scores_x` (rows are
/// observations) and residuals.
pub(crate) fn sandwich(
    bread: &DMatrix<f64>,
    scores_x: &DMatrix<f64>,
    resid: &DVector<f64>,
    input: &CovarianceInput<'_>,
) -> Result<DMatrix<f64>, EstimationError> {
    let n = scores_x.nrows();
    let k = scores_x.ncols();
    if n <= input.k_total {
        return Err(EstimationError::TooFewObservations { n, k: input.k_total });
    }
    let dof = (n - input.k_total) as f64;
    let out = match input.kind {
        Covariance::Homoskedastic => {
            let s2 = resid.dot(resid) / dof;
            bread * s2
        }
        Covariance::Robust => {
            let mut meat = DMatrix::<f64>::zeros(k, k);
            for i in 0..n {
                let s = scores_x.row(i).transpose() * resid[i];
                meat.ger(1.0, &s, &s, 1.0);
            }
            let factor = if input.small_sample { n as f64 / dof } else { 1.0 };
            bread * meat * bread * factor
        }
        Covariance::Cluster(_) => {
            let codes = input.clusters.expect("cluster codes prepared");
            let g = input.n_clusters;
            if g < 2 {
                return Err(EstimationError::TooFewClusters(g));
            }
            let mut sums = DMatrix::<f64>::zeros(g, k);
            for i in 0..n {
                let c = codes[i];
                for j in 0..k {
                    sums[(c, j)] += resid[i] * scores_x[(i, j)];
                }
            }
            let meat = sums.transpose() * &sums;
            let factor = if input.small_sample {
                (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / dof)
            } else {
                1.0
            };
            bread * meat * bread * factor
        }
    };
    Ok(symmetrize(out))
}
