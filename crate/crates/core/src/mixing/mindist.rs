use serde::{Deserialize, Serialize};

use super::chebyshev::{cdf_columns, chebyshev_weights, ChebyshevFit};
use super::{default_bounds, log_grid, FitDiagnostics, MixingError};
use crate::measures::{tail_cutoff, CountDistribution, DiscreteMeasure};

/// A Nelder-Mead run stops once its simplex is this narrow in log-location.
const SIMPLEX_WIDTH: f64 = 1e-8;
const SIMPLEX_EVALS: usize = 2_000;

/// Minimum-distance search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinDistConfig {
    /// Maximal number of atoms.
    pub m: usize,
    /// Precision margin over the best objective found.
    pub epsilon: f64,
    pub search_lo: f64,
    pub search_hi: f64,
    /// Number of log-spaced candidate locations for the exhaustive search.
    pub coarse_grid: usize,
    pub refine_rounds: usize,
    /// Largest number of location tuples the exhaustive search may visit.
    pub tuple_budget: u128,
}

impl MinDistConfig {
    pub const DEFAULT_COARSE_GRID: usize = 25;
    pub const DEFAULT_REFINE_ROUNDS: usize = 8;
    pub const DEFAULT_TUPLE_BUDGET: u128 = 200_000;

    pub fn for_data(phi: &CountDistribution, m: usize, epsilon: f64) -> Self {
        let (search_lo, search_hi) = default_bounds(phi);
        Self {
            m,
            epsilon,
            search_lo,
            search_hi,
            coarse_grid: Self::DEFAULT_COARSE_GRID,
            refine_rounds: Self::DEFAULT_REFINE_ROUNDS,
            tuple_budget: Self::DEFAULT_TUPLE_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<(), MixingError> {
        let ok = self.m >= 1
            && self.epsilon > 0.0
            && self.search_lo > 0.0
            && self.search_hi > self.search_lo
            && self.search_hi.is_finite()
            && self.coarse_grid >= 1;
        if ok {
            Ok(())
        } else {
            Err(MixingError::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Highest `k` entering the objective: the data range, extended far
    /// enough that a Poisson mixture on the search range is captured.
    pub fn k_max(&self, phi: &CountDistribution) -> usize {
        phi.k_max().max(tail_cutoff(self.search_hi))
    }
}

/// Minimax simplex weights for fixed `locations`.
pub fn fit_weights_chebyshev(
    locations: &[f64],
    phi: &CountDistribution,
    k_max: usize,
) -> Result<ChebyshevFit, MixingError> {
    if locations.is_empty() {
        return Err(MixingError::InvalidConfig("no locations".into()));
    }
    if let Some(&x) = locations.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(MixingError::InvalidConfig(format!("location {x}")));
    }
    let mut sorted = locations.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(MixingError::InvalidConfig("locations must be distinct".into()));
    }
    Ok(fit(locations, &phi.cdf_table(k_max)))
}

fn fit(locations: &[f64], target: &[f64]) -> ChebyshevFit {
    let columns = cdf_columns(locations, target.len() - 1);
    chebyshev_weights(&columns, target)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Visits every increasing index tuple of length `m` from `0..n` in
/// lexicographic order.
fn for_each_tuple(n: usize, m: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..m).rev().find(|&i| idx[i] < n - m + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Searches atom measures with at most `cfg.m` atoms for the smallest
/// `sup_k |F(k; π(Q)) − F(k; φ)|`.
///
/// Every increasing tuple of coarse-grid locations gets a minimax weight fit;
/// the best tuple (lexicographically first among ties) is then refined by
/// Nelder-Mead restarts over the log-locations, the initial simplex halving
/// each round. The returned objective is therefore never above the
/// best coarse objective, which sits within `cfg.epsilon` of itself.
/// `converged` reports whether the last refinement round moved the objective
/// by less than `cfg.epsilon`.
pub fn min_distance(
    phi: &CountDistribution,
    cfg: &MinDistConfig,
) -> Result<(DiscreteMeasure, FitDiagnostics), MixingError> {
    cfg.validate()?;
    let size = cfg.m.min(cfg.coarse_grid);
    let tuples = binomial(cfg.coarse_grid, size);
    if tuples > cfg.tuple_budget {
        return Err(MixingError::BudgetExceeded { tuples, budget: cfg.tuple_budget });
    }
    let k_max = cfg.k_max(phi);
    let target = phi.cdf_table(k_max);
    let grid = log_grid(cfg.search_lo, cfg.search_hi, cfg.coarse_grid);
    let grid_columns = cdf_columns(&grid, k_max);

    let mut best: Option<(Vec<f64>, ChebyshevFit)> = None;
    let mut columns = Vec::with_capacity(size);
    for_each_tuple(cfg.coarse_grid, size, |idx| {
        columns.clear();
        columns.extend(idx.iter().map(|&i| grid_columns[i].clone()));
        let candidate = chebyshev_weights(&columns, &target);
        if best.as_ref().is_none_or(|(_, b)| candidate.objective < b.objective) {
            best = Some((idx.iter().map(|&i| grid[i]).collect(), candidate));
        }
    });
    let (mut locations, mut best_fit) = best.expect("at least one tuple");
    let mut trace = vec![best_fit.objective];

    let (ln_lo, ln_hi) = (cfg.search_lo.ln(), cfg.search_hi.ln());
    let step = if cfg.coarse_grid > 1 {
        (ln_hi - ln_lo) / (cfg.coarse_grid - 1) as f64
    } else {
        ln_hi - ln_lo
    };
    let eval = |u: &[f64]| -> ChebyshevFit {
        let probe: Vec<f64> = u.iter().map(|v| v.clamp(ln_lo, ln_hi).exp()).collect();
        fit(&probe, &target)
    };
    let mut rounds = 0;
    let mut last_gain = f64::INFINITY;
    for round in 0..cfg.refine_rounds {
        let before = best_fit.objective;
        let start: Vec<f64> = locations.iter().map(|x| x.ln()).collect();
        let (u, f) = nelder_mead(&eval, start, step * 0.5f64.powi(round as i32 + 1));
        if f.objective < best_fit.objective {
            locations = u.iter().map(|v| v.clamp(ln_lo, ln_hi).exp()).collect();
            best_fit = f;
        }
        rounds += 1;
        last_gain = before - best_fit.objective;
        trace.push(best_fit.objective);
        if last_gain == 0.0 {
            break;
        }
    }

    let measure = DiscreteMeasure::normalized(locations.iter().copied().zip(best_fit.weights.iter().copied()))?;
    let objective = super::ks_objective(measure.locations(), measure.weights(), phi, k_max);
    let diagnostics = FitDiagnostics {
        objective,
        iterations: rounds,
        converged: last_gain < cfg.epsilon,
        max_directional_derivative: None,
        k_max,
        trace,
    };
    Ok((measure, diagnostics))
}

/// Nelder-Mead with standard coefficients, minimizing `f(u).objective`.
fn nelder_mead(
    f: &impl Fn(&[f64]) -> ChebyshevFit,
    start: Vec<f64>,
    size: f64,
) -> (Vec<f64>, ChebyshevFit) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, ChebyshevFit)> = Vec::with_capacity(dim + 1);
    simplex.push((start.clone(), f(&start)));
    for i in 0..dim {
        let mut u = start.clone();
        u[i] += size;
        let fu = f(&u);
        simplex.push((u, fu));
    }
    let mut evals = dim + 1;
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(a, b)| a + t * (b - a)).collect()
    };
    while evals < SIMPLEX_EVALS {
        simplex.sort_by(|a, b| a.1.objective.total_cmp(&b.1.objective));
        let width = simplex[1..]
            .iter()
            .flat_map(|(u, _)| u.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if width < SIMPLEX_WIDTH {
            break;
        }
        let mut centroid = vec![0.0; dim];
        for (u, _) in &simplex[..dim] {
            centroid.iter_mut().zip(u).for_each(|(c, v)| *c += v / dim as f64);
        }
        let worst = simplex[dim].0.clone();
        let (f_best, f_second, f_worst) =
            (simplex[0].1.objective, simplex[dim - 1].1.objective, simplex[dim].1.objective);

        let reflected = point(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr.objective < f_best {
            let expanded = point(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            evals += 1;
            simplex[dim] = if fe.objective < fr.objective { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr.objective < f_second {
            simplex[dim] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr.objective < f_worst {
            let u = point(&centroid, &reflected, 0.5);
            let fu = f(&u);
            (u, fu)
        } else {
            let u = point(&centroid, &worst, 0.5);
            let fu = f(&u);
            (u, fu)
        };
        evals += 1;
        if fc.objective < f_worst.min(fr.objective) {
            simplex[dim] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let u = point(&best, &entry.0, 0.5);
            let fu = f(&u);
            *entry = (u, fu);
        }
        evals += dim;
    }
    simplex.sort_by(|a, b| a.1.objective.total_cmp(&b.1.objective));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{poisson_mixture, wasserstein};

    fn truncated(q: &DiscreteMeasure, k_max: usize) -> CountDistribution {
        let lam = poisson_mixture(q, k_max);
        let head: f64 = lam.masses().iter().sum();
        CountDistribution::new(lam.masses().iter().map(|m| m / head).collect()).unwrap()
    }

    fn two_atom() -> DiscreteMeasure {
        DiscreteMeasure::new([(0.5, 0.25), (1.5, 0.75)]).unwrap()
    }

    #[test]
    fn tuples_are_lexicographic() {
        let mut seen = Vec::new();
        for_each_tuple(4, 2, |t| seen.push(t.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut count = 0;
        for_each_tuple(3, 3, |_| count += 1);
        assert_eq!(count, 1);
        assert_eq!(binomial(25, 2), 300);
        assert_eq!(binomial(25, 3), 2300);
    }

    #[test]
    fn single_location_fit() {
        let phi = truncated(&DiscreteMeasure::point_mass(1.3).unwrap(), 30);
        let fit = fit_weights_chebyshev(&[1.0], &phi, 30).unwrap();
        assert_eq!(fit.weights, vec![1.0]);
        let direct = super::super::ks_objective(&[1.0], &[1.0], &phi, 30);
        assert_eq!(fit.objective, direct);
    }

    #[test]
    fn true_locations_recover_weights() {
        let lam = poisson_mixture(&two_atom(), 40);
        let fit = fit_weights_chebyshev(&[0.5, 1.5], &lam, 40).unwrap();
        assert!((fit.weights[0] - 0.25).abs() < 1e-6 && (fit.weights[1] - 0.75).abs() < 1e-6);
        assert!(fit.objective < 1e-12);
        assert!(fit.gap < 1e-9);
    }

    #[test]
    fn duplicate_target_puts_all_weight_on_it() {
        let lam = poisson_mixture(&DiscreteMeasure::point_mass(2.0).unwrap(), 40);
        let fit = fit_weights_chebyshev(&[0.7, 2.0, 5.0], &lam, 40).unwrap();
        assert!((fit.weights[1] - 1.0).abs() < 1e-9, "{fit:?}");
        assert!(fit.objective < 1e-12);
        assert!(fit_weights_chebyshev(&[1.0, 1.0], &lam, 40).is_err());
    }

    #[test]
    fn single_atom_poisson_one() {
        let phi = truncated(&DiscreteMeasure::point_mass(1.0).unwrap(), 30);
        let cfg = MinDistConfig::for_data(&phi, 1, 1e-6);
        let (q, diag) = min_distance(&phi, &cfg).unwrap();
        assert_eq!(q.len(), 1);
        assert!((q.locations()[0] - 1.0).abs() < 1e-4, "{q:?}");
        assert!(diag.objective <= 1e-6);
    }

    #[test]
    fn two_atom_mixture() {
        let phi = truncated(&two_atom(), 30);
        let cfg = MinDistConfig::for_data(&phi, 2, 1e-6);
        let (q, diag) = min_distance(&phi, &cfg).unwrap();
        assert!(wasserstein(&q, &two_atom()) <= 0.1, "{q:?} {diag:?}");
        assert!(diag.objective <= diag.trace[0]);
        let again = super::super::ks_objective(q.locations(), q.weights(), &phi, diag.k_max);
        assert!((again - diag.objective).abs() <= 1e-12);
    }

    #[test]
    fn larger_budget_is_no_worse() {
        let phi = truncated(&DiscreteMeasure::point_mass(1.0).unwrap(), 30);
        let one = min_distance(&phi, &MinDistConfig::for_data(&phi, 1, 1e-6)).unwrap().1;
        let three = min_distance(&phi, &MinDistConfig::for_data(&phi, 3, 1e-6)).unwrap().1;
        assert!(three.objective <= one.objective + 1e-12, "{} vs {}", three.objective, one.objective);
    }

    #[test]
    fn budget_is_enforced() {
        let phi = CountDistribution::new(vec![0.5, 0.5]).unwrap();
        let cfg = MinDistConfig { coarse_grid: 200, m: 4, ..MinDistConfig::for_data(&phi, 4, 1e-3) };
        assert!(matches!(min_distance(&phi, &cfg), Err(MixingError::BudgetExceeded { .. })));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn reported_objective_is_reproducible(
            masses in proptest::collection::vec(0.0f64..1.0, 2..8),
            m in 1usize..3,
        ) {
            let total: f64 = masses.iter().sum();
            proptest::prop_assume!(total > 0.1 && masses[1..].iter().any(|&v| v > 0.0));
            let phi = CountDistribution::new(masses.iter().map(|v| v / total).collect()).unwrap();
            let cfg = MinDistConfig { refine_rounds: 3, ..MinDistConfig::for_data(&phi, m, 1e-4) };
            let (q, diag) = min_distance(&phi, &cfg).unwrap();
            proptest::prop_assert!(q.len() <= m);
            let again = super::super::ks_objective(q.locations(), q.weights(), &phi, diag.k_max);
            proptest::prop_assert!((again - diag.objective).abs() <= 1e-12);
            proptest::prop_assert!(diag.objective <= diag.trace[0] + 1e-15);
        }
    }
}
