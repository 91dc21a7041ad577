use serde::{Deserialize, Serialize};

use super::{default_bounds, log_grid, FitDiagnostics, MixingError};
use crate::measures::{poisson_pmf, CountDistribution, DiscreteMeasure};

/// Fixed-grid EM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpmleConfig {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub max_iters: usize,
    /// Stop once every grid point has directional derivative at most this.
    pub dd_tol: f64,
    /// Grid weights below this are pruned from the returned measure.
    pub weight_floor: f64,
}

impl NpmleConfig {
    pub const DEFAULT_GRID_POINTS: usize = 400;

    /// 400 log-spaced points over the default bounds for `phi`.
    pub fn for_data(phi: &CountDistribution) -> Self {
        let (grid_lo, grid_hi) = default_bounds(phi);
        Self {
            grid_lo,
            grid_hi,
            grid_points: Self::DEFAULT_GRID_POINTS,
            max_iters: 20_000,
            dd_tol: 1e-4,
            weight_floor: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), MixingError> {
        let ok = self.grid_lo > 0.0
            && self.grid_hi > self.grid_lo
            && self.grid_hi.is_finite()
            && self.grid_points >= 2
            && self.dd_tol > 0.0
            && self.weight_floor > 0.0
            && self.weight_floor < 1.0;
        if ok {
            Ok(())
        } else {
            Err(MixingError::InvalidConfig(format!("{self:?}")))
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.grid_lo, self.grid_hi, self.grid_points)
    }
}

/// `Σ_k φ_k ln Σ_j w_j pmf(k; x_j)` over the support of `phi`.
pub fn pseudo_log_likelihood(phi: &CountDistribution, q: &DiscreteMeasure) -> f64 {
    phi.support()
        .map(|k| phi.mass(k) * q.expect(|x| poisson_pmf(k, x)).ln())
        .sum()
}

/// Maximizes the pseudo-likelihood over measures supported on the grid of
/// `cfg` by multiplicative EM updates.
///
/// The masses of `phi` are renormalized over its finite support, so inputs
/// carrying a truncation tail are accepted.
pub fn npmle(
    phi: &CountDistribution,
    cfg: &NpmleConfig,
) -> Result<(DiscreteMeasure, FitDiagnostics), MixingError> {
    cfg.validate()?;
    let ks: Vec<usize> = phi.support().collect();
    if ks.iter().all(|&k| k == 0) {
        return Err(MixingError::Degenerate);
    }
    let total: f64 = ks.iter().map(|&k| phi.mass(k)).sum();
    let data: Vec<f64> = ks.iter().map(|&k| phi.mass(k) / total).collect();

    let grid = cfg.grid();
    // likelihood rows, one per observed k
    let lik: Vec<Vec<f64>> = ks
        .iter()
        .map(|&k| grid.iter().map(|&x| poisson_pmf(k, x)).collect())
        .collect();
    let evaluate = |w: &[f64]| -> Result<(f64, Vec<f64>), MixingError> {
        let mut objective = 0.0;
        let mut gradient = vec![0.0; w.len()];
        for (r, row) in lik.iter().enumerate() {
            let f: f64 = row.iter().zip(w).map(|(l, wj)| l * wj).sum();
            if !(f > 0.0) || !f.is_finite() {
                return Err(MixingError::Numeric(format!("fitted mass {f} at k = {}", ks[r])));
            }
            objective += data[r] * f.ln();
            let scale = data[r] / f;
            for (gj, l) in gradient.iter_mut().zip(row) {
                *gj += scale * l;
            }
        }
        Ok((objective, gradient))
    };
    let mut w = vec![1.0 / grid.len() as f64; grid.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut max_dd;

    loop {
        let (objective, gradient) = evaluate(&w)?;
        trace.push(objective);
        max_dd = gradient.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)) - 1.0;
        if max_dd <= cfg.dd_tol {
            converged = true;
            break;
        }
        if iterations == cfg.max_iters {
            break;
        }
        for (wj, gj) in w.iter_mut().zip(&gradient) {
            *wj *= gj;
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        iterations += 1;
    }

    let measure = DiscreteMeasure::normalized(
        grid.iter().copied().zip(w.iter().copied()).filter(|&(_, wj)| wj >= cfg.weight_floor),
    )?;
    let objective = data
        .iter()
        .zip(&ks)
        .map(|(d, &k)| d * measure.expect(|x| poisson_pmf(k, x)).ln())
        .sum();
    let diagnostics = FitDiagnostics {
        objective,
        iterations,
        converged,
        max_directional_derivative: Some(max_dd),
        k_max: phi.k_max(),
        trace,
    };
    Ok((measure, diagnostics))
}
