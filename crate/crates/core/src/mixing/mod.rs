//! Recovery of the mixing distribution from a pseudo-empirical measure: the
//! nonparametric maximum likelihood estimator and the minimum-distance
//! estimator over measures with a bounded number of atoms.

mod chebyshev;
mod mindist;
mod npmle;

use serde::Serialize;
use thiserror::Error;

use crate::measures::MeasureError;

pub use chebyshev::{ks_objective, ChebyshevFit};
pub use mindist::{fit_weights_chebyshev, min_distance, MinDistConfig};
pub use npmle::{npmle, pseudo_log_likelihood, NpmleConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixingError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("all mass sits at k = 0; the likelihood only increases as the atom approaches 0")]
    Degenerate,
    #[error("non-finite likelihood encountered: {0}")]
    Numeric(String),
    #[error("{tuples} location tuples exceed the search budget of {budget}")]
    BudgetExceeded { tuples: u128, budget: u128 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    /// Final pseudo-log-likelihood (NPMLE) or final sup-CDF distance
    /// (minimum distance).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// NPMLE only.
    pub max_directional_derivative: Option<f64>,
    /// Highest `k` entering the objective.
    pub k_max: usize,
    /// Objective after each iteration (NPMLE) or after the coarse search and
    /// each refinement round (minimum distance).
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Bounds `[k_lo/2 ∨ 0.01, 2·k_hi]` clipped to `[0.01, 100]`, from the
/// smallest and largest `k` carrying mass.
pub(crate) fn default_bounds(phi: &crate::measures::CountDistribution) -> (f64, f64) {
    let mut support = phi.support();
    let k_lo = support.next().unwrap_or(0);
    let k_hi = support.last().unwrap_or(k_lo);
    let lo = (k_lo as f64 / 2.0).clamp(0.01, 100.0);
    let hi = (2.0 * k_hi as f64).clamp(0.01, 100.0);
    if hi > lo {
        (lo, hi)
    } else {
        (0.01, 100.0)
    }
}

pub(crate) fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i == points - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}
