//! Finitely supported probability measures on the positive reals and on the
//! non-negative integers, together with the distances and the Poisson mixture
//! transform used throughout the crate.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

/// Atoms closer than this are merged on construction.
pub const MERGE_TOL: f64 = 1e-12;
/// Allowed deviation of the total weight of a [`DiscreteMeasure`] from one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Allowed deviation of the total mass of a [`CountDistribution`] from one.
pub const MASS_SUM_TOL: f64 = 1e-9;
/// Target tail mass for [`tail_cutoff`].
pub const TAIL_TARGET: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("atom location {0} is not a positive finite number")]
    BadLocation(f64),
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("measure has no atoms")]
    Empty,
    #[error("mass {mass} at k={k} is negative or not finite")]
    BadMass { k: usize, mass: f64 },
}

/// A probability measure with finitely many atoms on `(0, ∞)`.
///
/// Locations are strictly increasing, every stored weight is positive and the
/// weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct DiscreteMeasure {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from `(location, weight)` pairs in any order.
    ///
    /// Zero-weight atoms are dropped and atoms within [`MERGE_TOL`] of each
    /// other are merged into the first of them.
    pub fn new<I>(atoms: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let m = Self::collect(atoms)?;
        let total: f64 = m.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MeasureError::NotNormalized(total));
        }
        Ok(m)
    }

    /// Like [`DiscreteMeasure::new`], but rescales the weights to sum to one.
    pub fn normalized<I>(atoms: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut m = Self::collect(atoms)?;
        let total: f64 = m.weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(MeasureError::NotNormalized(total));
        }
        m.weights.iter_mut().for_each(|w| *w /= total);
        Ok(m)
    }

    pub fn point_mass(location: f64) -> Result<Self, MeasureError> {
        Self::new([(location, 1.0)])
    }

    fn collect<I>(atoms: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for (x, w) in atoms {
            if !(x > 0.0) || !x.is_finite() {
                return Err(MeasureError::BadLocation(x));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(MeasureError::BadWeight(w));
            }
            if w > 0.0 {
                raw.push((x, w));
            }
        }
        if raw.is_empty() {
            return Err(MeasureError::Empty);
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut locations = Vec::with_capacity(raw.len());
        let mut weights: Vec<f64> = Vec::with_capacity(raw.len());
        for (x, w) in raw {
            match locations.last() {
                Some(&last) if x - last <= MERGE_TOL => {
                    *weights.last_mut().expect("parallel vectors") += w;
                }
                _ => {
                    locations.push(x);
                    weights.push(w);
                }
            }
        }
        Ok(Self { locations, weights })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations.iter().copied().zip(self.weights.iter().copied())
    }

    /// `[min location, max location]`.
    pub fn support(&self) -> (f64, f64) {
        (self.locations[0], *self.locations.last().expect("non-empty"))
    }

    /// Right-continuous CDF `F(x) = Σ_{x_j ≤ x} w_j`.
    pub fn cdf(&self, x: f64) -> f64 {
        let idx = self.locations.partition_point(|&loc| loc <= x);
        if idx == self.locations.len() {
            return 1.0;
        }
        self.weights[..idx].iter().sum()
    }

    /// `Σ_j w_j f(x_j)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms().map(|(x, w)| w * f(x)).sum()
    }

    /// Convex combination `α·self + (1−α)·other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Result<Self, MeasureError> {
        let left = self.atoms().map(|(x, w)| (x, alpha * w));
        let right = other.atoms().map(|(x, w)| (x, (1.0 - alpha) * w));
        Self::normalized(left.chain(right))
    }
}

impl TryFrom<Vec<(f64, f64)>> for DiscreteMeasure {
    type Error = MeasureError;

    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(atoms)
    }
}

impl From<DiscreteMeasure> for Vec<(f64, f64)> {
    fn from(m: DiscreteMeasure) -> Self {
        m.atoms().collect()
    }
}

/// A probability mass function on `{0, 1, …, k_max}` plus an optional mass
/// `tail` sitting beyond `k_max`.
///
/// The tail behaves as an atom at `+∞`: it never contributes to `F(k)` for a
/// finite `k`, and it counts as its own point in [`l1_distance`]. Exact
/// distributions such as the Good-Turing estimator have zero tail; truncated
/// Poisson mixtures carry the truncated remainder there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    masses: Vec<f64>,
    tail: f64,
}

impl CountDistribution {
    /// Dense masses for `k = 0..masses.len()`, no tail.
    pub fn new(masses: Vec<f64>) -> Result<Self, MeasureError> {
        Self::with_tail(masses, 0.0)
    }

    pub fn with_tail(mut masses: Vec<f64>, tail: f64) -> Result<Self, MeasureError> {
        if masses.is_empty() {
            return Err(MeasureError::Empty);
        }
        for (k, &mass) in masses.iter().enumerate() {
            if !(mass >= 0.0) || !mass.is_finite() {
                return Err(MeasureError::BadMass { k, mass });
            }
        }
        if !(tail >= 0.0) || !tail.is_finite() {
            return Err(MeasureError::BadMass { k: masses.len(), mass: tail });
        }
        let total = masses.iter().sum::<f64>() + tail;
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(MeasureError::NotNormalized(total));
        }
        while masses.len() > 1 && masses.last() == Some(&0.0) {
            masses.pop();
        }
        Ok(Self { masses, tail })
    }

    /// A unit mass at `k`.
    pub fn point(k: usize) -> Self {
        let mut masses = vec![0.0; k + 1];
        masses[k] = 1.0;
        Self { masses, tail: 0.0 }
    }

    /// Largest stored index.
    pub fn k_max(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// Mass at `k`, zero beyond the stored range.
    pub fn mass(&self, k: usize) -> f64 {
        self.masses.get(k).copied().unwrap_or(0.0)
    }

    /// `F(k) = Σ_{j ≤ k} mass(j)`.
    pub fn cdf(&self, k: usize) -> f64 {
        let upto = (k + 1).min(self.masses.len());
        let head: f64 = self.masses[..upto].iter().sum();
        if upto == self.masses.len() && self.tail == 0.0 {
            // exact distributions reach one at their top index
            head.min(1.0)
        } else {
            head
        }
    }

    /// Running CDF values for `k = 0..=k_max`.
    pub fn cdf_table(&self, k_max: usize) -> Vec<f64> {
        let mut acc = 0.0;
        (0..=k_max)
            .map(|k| {
                acc += self.mass(k);
                acc
            })
            .collect()
    }

    /// `Σ_k k·mass(k)` over the stored range.
    pub fn mean(&self) -> f64 {
        self.masses.iter().enumerate().map(|(k, m)| k as f64 * m).sum()
    }

    /// Indices with positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.masses.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(k, _)| k)
    }
}

/// `ln( x^k e^{-x} / k! )`.
pub fn poisson_ln_pmf(k: usize, x: f64) -> f64 {
    if k == 0 {
        return -x;
    }
    k as f64 * x.ln() - x - ln_factorial(k as u64)
}

pub fn poisson_pmf(k: usize, x: f64) -> f64 {
    poisson_ln_pmf(k, x).exp()
}

/// Poisson CDF values `h(k; x)` for `k = 0..=k_max`.
pub fn poisson_cdf_table(x: f64, k_max: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (0..=k_max)
        .map(|k| {
            acc += poisson_pmf(k, x);
            acc.min(1.0)
        })
        .collect()
}

/// Poisson `Q`-mixture `λ_k = Σ_j w_j · pmf(k; x_j)` for `k = 0..=k_max`, with
/// the uncaptured remainder stored as the tail.
pub fn poisson_mixture(q: &DiscreteMeasure, k_max: usize) -> CountDistribution {
    let masses: Vec<f64> = (0..=k_max)
        .map(|k| q.atoms().map(|(x, w)| w * poisson_pmf(k, x)).sum())
        .collect();
    let head: f64 = masses.iter().sum();
    let tail = (1.0 - head).max(0.0);
    CountDistribution::with_tail(masses, tail).expect("poisson mixture is a sub-probability vector")
}

/// Smallest `k` such that a Poisson mixture with atoms no larger than
/// `top_atom` leaves less than [`TAIL_TARGET`] above `k`, capped at
/// `10·top_atom + 50`.
pub fn tail_cutoff(top_atom: f64) -> usize {
    let cap = (10.0 * top_atom + 50.0).ceil() as usize;
    let mut acc = 0.0;
    for k in 0..=cap {
        acc += poisson_pmf(k, top_atom);
        if 1.0 - acc < TAIL_TARGET {
            return k;
        }
    }
    cap
}

/// `∫ |F(x; p) − F(x; q)| dx`, integrated exactly over the merged atom grid.
pub fn wasserstein(p: &DiscreteMeasure, q: &DiscreteMeasure) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fp, mut fq) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    let (pl, pw, ql, qw) = (p.locations(), p.weights(), q.locations(), q.weights());
    while i < pl.len() || j < ql.len() {
        let next = match (pl.get(i), ql.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        if let Some(x0) = prev {
            total += (fp - fq).abs() * (next - x0);
        }
        while i < pl.len() && pl[i] == next {
            fp += pw[i];
            i += 1;
        }
        while j < ql.len() && ql[j] == next {
            fq += qw[j];
            j += 1;
        }
        prev = Some(next);
    }
    total
}

/// `sup_k |F(k; p) − F(k; q)|` over `k = 0..=max(k_max(p), k_max(q))`.
pub fn ks_distance(p: &CountDistribution, q: &CountDistribution) -> f64 {
    let top = p.k_max().max(q.k_max());
    let (mut fp, mut fq) = (0.0, 0.0);
    let mut best: f64 = 0.0;
    for k in 0..=top {
        fp += p.mass(k);
        fq += q.mass(k);
        best = best.max((fp - fq).abs());
    }
    best.min(1.0)
}

/// `Σ_k |p_k − q_k|` over the union support, with the tails compared as a
/// shared atom at infinity.
pub fn l1_distance(p: &CountDistribution, q: &CountDistribution) -> f64 {
    let top = p.k_max().max(q.k_max());
    let body: f64 = (0..=top).map(|k| (p.mass(k) - q.mass(k)).abs()).sum();
    (body + (p.tail() - q.tail()).abs()).min(2.0)
}
