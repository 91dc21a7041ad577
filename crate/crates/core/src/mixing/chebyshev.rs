//! Minimax weight fit for fixed atom locations.
//!
//! With locations fixed, `min_w sup_k |Σ_j w_j h(k; x_j) − F(k)|` over the
//! simplex is a matrix game: since `Σ w = 1`, every residual `±(Hw − F)_k`
//! equals `(A w)_i` for a row `i` of `A = [H − F1ᵀ; F1ᵀ − H]`. Shifting `A`
//! by a constant `c` makes it strictly positive, and the game value is then
//! `1 / max{1ᵀx : (A + c) x ≤ 1, x ≥ 0}`. That LP starts feasible at the
//! origin and has only `m` structural columns, so a condensed tableau of
//! size `rows × (m + 1)` suffices.

use crate::measures::{poisson_cdf_table, CountDistribution};

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 10_000;

/// Result of [`chebyshev_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevFit {
    pub weights: Vec<f64>,
    /// Achieved `sup_k` residual, recomputed from `weights`.
    pub objective: f64,
    /// Upper minus lower bound on the game value from the primal and dual
    /// solutions.
    pub gap: f64,
}

/// Column `j` holds `h(k; x_j)` for `k = 0..=k_max`.
pub(crate) fn cdf_columns(locations: &[f64], k_max: usize) -> Vec<Vec<f64>> {
    locations.iter().map(|&x| poisson_cdf_table(x, k_max)).collect()
}

/// `sup_{k ≤ k_max} |Σ_j w_j h(k; x_j) − F(k; φ)|`.
pub fn ks_objective(locations: &[f64], weights: &[f64], phi: &CountDistribution, k_max: usize) -> f64 {
    let columns = cdf_columns(locations, k_max);
    residual(&columns, weights, &phi.cdf_table(k_max))
}

pub(crate) fn residual(columns: &[Vec<f64>], weights: &[f64], target: &[f64]) -> f64 {
    target
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let fit: f64 = columns.iter().zip(weights).map(|(c, w)| w * c[k]).sum();
            (fit - f).abs()
        })
        .fold(0.0, f64::max)
}

/// Minimax simplex weights for the given CDF columns against `target`.
pub(crate) fn chebyshev_weights(columns: &[Vec<f64>], target: &[f64]) -> ChebyshevFit {
    let m = columns.len();
    if m == 1 {
        let weights = vec![1.0];
        let objective = residual(columns, &weights, target);
        return ChebyshevFit { weights, objective, gap: 0.0 };
    }
    let k_rows = target.len();
    let rows = 2 * k_rows;

    let entry = |i: usize, j: usize| -> f64 {
        let k = i % k_rows;
        let d = columns[j][k] - target[k];
        if i < k_rows {
            d
        } else {
            -d
        }
    };
    let shift = 1.0
        + (0..rows)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| entry(i, j).abs())
            .fold(0.0, f64::max);

    // tableau rows 0..rows are constraints, row `rows` is the objective;
    // column m is the right-hand side
    let width = m + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    for i in 0..rows {
        for j in 0..m {
            t[i * width + j] = entry(i, j) + shift;
        }
        t[i * width + m] = 1.0;
    }
    for j in 0..m {
        t[rows * width + j] = -1.0;
    }
    // labels: 0..m structural, m..m+rows slacks
    let mut nonbasic: Vec<usize> = (0..m).collect();
    let mut basic: Vec<usize> = (m..m + rows).collect();

    for _ in 0..MAX_PIVOTS {
        // lowest-label improving column
        let entering = (0..m)
            .filter(|&j| t[rows * width + j] < -PIVOT_TOL)
            .min_by_key(|&j| nonbasic[j]);
        let Some(s) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = t[i * width + s];
            if a > PIVOT_TOL {
                let ratio = t[i * width + m] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        // ties go to the largest pivot element; the fitted
                        // optimum is massively degenerate and small pivots
                        // wreck the tableau
                        if ratio < best - RATIO_TOL
                            || (ratio <= best + RATIO_TOL && a > t[r * width + s])
                        {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        // the feasible region is bounded because every entry is positive
        let (r, _) = leave.expect("bounded game LP");
        pivot(&mut t, width, rows + 1, r, s);
        std::mem::swap(&mut nonbasic[s], &mut basic[r]);
    }

    let mut x = vec![0.0; m];
    for (i, &label) in basic.iter().enumerate() {
        if label < m {
            x[label] = t[i * width + m].max(0.0);
        }
    }
    let total: f64 = x.iter().sum();
    let weights: Vec<f64> = if total > 0.0 {
        x.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / m as f64; m]
    };

    // dual prices of the slack rows give the row player's mixed strategy
    let mut y = vec![0.0; rows];
    for (j, &label) in nonbasic.iter().enumerate() {
        if label >= m {
            y[label - m] = t[rows * width + j].max(0.0);
        }
    }
    let y_total: f64 = y.iter().sum();
    let upper = (0..rows)
        .map(|i| (0..m).map(|j| (entry(i, j) + shift) * weights[j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let lower = if y_total > 0.0 {
        (0..m)
            .map(|j| (0..rows).map(|i| y[i] / y_total * (entry(i, j) + shift)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::NEG_INFINITY
    };

    let objective = residual(columns, &weights, target);
    ChebyshevFit { weights, objective, gap: (upper - lower).max(0.0) }
}

fn pivot(t: &mut [f64], width: usize, height: usize, r: usize, s: usize) {
    let p = t[r * width + s];
    let pivot_row: Vec<f64> = t[r * width..(r + 1) * width].to_vec();
    for i in 0..height {
        if i == r {
            continue;
        }
        let factor = t[i * width + s];
        if factor == 0.0 {
            continue;
        }
        for j in 0..width {
            if j == s {
                t[i * width + j] = -factor / p;
            } else {
                t[i * width + j] -= factor * pivot_row[j] / p;
            }
        }
    }
    for j in 0..width {
        t[r * width + j] = if j == s { 1.0 / p } else { pivot_row[j] / p };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force minimax over a fine simplex grid for two columns.
    fn grid_minimax(columns: &[Vec<f64>], target: &[f64]) -> f64 {
        (0..=20_000)
            .map(|i| {
                let w = i as f64 / 20_000.0;
                residual(columns, &[w, 1.0 - w], target)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_grid_search_on_two_columns() {
        let columns = cdf_columns(&[0.7, 2.5], 15);
        let target = poisson_cdf_table(1.3, 15);
        let fit = chebyshev_weights(&columns, &target);
        let brute = grid_minimax(&columns, &target);
        assert!(fit.objective <= brute + 1e-12);
        assert!(brute - fit.objective < 1e-4);
        assert!(fit.gap < 1e-9, "gap {}", fit.gap);
    }

    #[test]
    fn three_columns_certified() {
        let columns = cdf_columns(&[0.3, 1.0, 4.0], 25);
        let target: Vec<f64> = poisson_cdf_table(2.0, 25);
        let fit = chebyshev_weights(&columns, &target);
        assert!(fit.gap < 1e-9);
        assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(fit.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn single_column_has_no_freedom() {
        let columns = cdf_columns(&[1.0], 10);
        let target = poisson_cdf_table(1.5, 10);
        let fit = chebyshev_weights(&columns, &target);
        assert_eq!(fit.weights, vec![1.0]);
        assert_eq!(fit.objective, residual(&columns, &[1.0], &target));
    }
}
