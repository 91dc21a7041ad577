//! Rare-events sources built by quantizing a piecewise-affine density on
//! `[0, 1]`, plus seeded i.i.d. sampling from them.
//!
//! Sampling uses xoshiro256** seeded through SplitMix64 (`seed_from_u64`), and
//! converts each 64-bit output `u` to a uniform `(u >> 11) · 2⁻⁵³` in `[0, 1)`.
//! A symbol is drawn by inverse CDF: the first index whose cumulative
//! probability exceeds the uniform. Any port that reproduces these three
//! steps reproduces the sample streams bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{DiscreteMeasure, MeasureError};

const PARTITION_TOL: f64 = 1e-12;
const DENSITY_INTEGRAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("density pieces must partition [0, 1]: {0}")]
    BadPartition(String),
    #[error("density must be bounded below by a positive constant, found minimum {0}")]
    NonPositive(f64),
    #[error("density integrates to {0}, expected 1")]
    NotNormalized(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("the law of g(W) is continuous on a sloped piece [{lo}, {hi}); only step densities have an exact limit")]
    UnsupportedDensity { lo: f64, hi: f64 },
    #[error("cannot read density file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse density file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// One affine piece `g(w) = a·w + b` on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub a: f64,
    pub b: f64,
}

impl Piece {
    fn value(&self, w: f64) -> f64 {
        self.a * w + self.b
    }

    /// `∫_{x0}^{x1} (a w + b) dw`.
    fn integral(&self, x0: f64, x1: f64) -> f64 {
        0.5 * self.a * (x1 * x1 - x0 * x0) + self.b * (x1 - x0)
    }
}

/// A density on `[0, 1]` made of finitely many affine pieces, bounded within
/// `[č, ĉ]` with `č > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseDensity {
    pieces: Vec<Piece>,
    lower: f64,
    upper: f64,
}

impl PiecewiseDensity {
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self, SourceError> {
        if pieces.is_empty() {
            return Err(SourceError::BadPartition("no pieces".into()));
        }
        pieces.sort_by(|x, y| x.lo.total_cmp(&y.lo));
        let mut edge = 0.0;
        for p in &pieces {
            if !(p.hi > p.lo) {
                return Err(SourceError::BadPartition(format!("empty piece [{}, {})", p.lo, p.hi)));
            }
            if (p.lo - edge).abs() > PARTITION_TOL {
                return Err(SourceError::BadPartition(format!("gap or overlap at w = {edge}")));
            }
            edge = p.hi;
        }
        if (edge - 1.0).abs() > PARTITION_TOL {
            return Err(SourceError::BadPartition(format!("pieces end at {edge}")));
        }
        // pin the outer edges exactly so that cell integrals never fall off
        pieces.first_mut().expect("non-empty").lo = 0.0;
        pieces.last_mut().expect("non-empty").hi = 1.0;

        let ends = pieces.iter().flat_map(|p| [p.value(p.lo), p.value(p.hi)]);
        let (lower, upper) = ends.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| {
            (l.min(v), u.max(v))
        });
        if !(lower > 0.0) || !upper.is_finite() {
            return Err(SourceError::NonPositive(lower));
        }
        let total: f64 = pieces.iter().map(|p| p.integral(p.lo, p.hi)).sum();
        if (total - 1.0).abs() > DENSITY_INTEGRAL_TOL {
            return Err(SourceError::NotNormalized(total));
        }
        Ok(Self { pieces, lower, upper })
    }

    /// Piecewise-constant density: `levels[i]` on `[breaks[i], breaks[i+1])`,
    /// where `breaks` runs from 0 to 1.
    pub fn step(breaks: &[f64], levels: &[f64]) -> Result<Self, SourceError> {
        if breaks.len() != levels.len() + 1 {
            return Err(SourceError::BadPartition(
                "need exactly one more break than levels".into(),
            ));
        }
        let pieces = breaks
            .windows(2)
            .zip(levels)
            .map(|(w, &b)| Piece { lo: w[0], hi: w[1], a: 0.0, b })
            .collect();
        Self::new(pieces)
    }

    pub fn uniform() -> Self {
        Self::step(&[0.0, 1.0], &[1.0]).expect("uniform density is valid")
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `(č, ĉ)`: the smallest and largest value of the density.
    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn is_step(&self) -> bool {
        self.pieces.iter().all(|p| p.a == 0.0)
    }

    /// Number of interior breakpoints where the density jumps.
    pub fn discontinuities(&self) -> usize {
        self.pieces
            .windows(2)
            .filter(|w| (w[0].value(w[0].hi) - w[1].value(w[1].lo)).abs() > PARTITION_TOL)
            .count()
    }

    /// Largest slope over all pieces.
    pub fn lipschitz(&self) -> f64 {
        self.pieces.iter().map(|p| p.a.abs()).fold(0.0, f64::max)
    }

    pub fn eval(&self, w: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.hi <= w).min(self.pieces.len() - 1);
        self.pieces[idx].value(w)
    }

    /// `∫_{x0}^{x1} g(w) dw` for `0 ≤ x0 ≤ x1 ≤ 1`, split at piece boundaries.
    pub fn integral(&self, x0: f64, x1: f64) -> f64 {
        let start = self.pieces.partition_point(|p| p.hi <= x0);
        self.pieces[start..]
            .iter()
            .take_while(|p| p.lo < x1)
            .map(|p| p.integral(x0.max(p.lo), x1.min(p.hi)))
            .sum()
    }
}

/// On-disk density description: `alpha` plus a list of `[[pieces]]` tables
/// with keys `lo`, `hi`, `a`, `b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub pieces: Vec<Piece>,
}

fn default_alpha() -> f64 {
    1.0
}

impl DensitySpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SourceError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, SourceError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn density(&self) -> Result<PiecewiseDensity, SourceError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(SourceError::InvalidConfiguration(format!("alpha = {}", self.alpha)));
        }
        PiecewiseDensity::new(self.pieces.clone())
    }
}

/// One member `(A_n, p_n)` of a rare-events source. Symbols are the indices
/// `0..probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct RareEventsSource {
    n: u64,
    alpha: f64,
    probs: Vec<f64>,
}

impl RareEventsSource {
    /// A source from an explicit probability vector.
    pub fn from_probs(n: u64, probs: Vec<f64>) -> Result<Self, SourceError> {
        if n == 0 || probs.is_empty() {
            return Err(SourceError::InvalidConfiguration("empty source".into()));
        }
        if let Some(&bad) = probs.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
            return Err(SourceError::InvalidConfiguration(format!("probability {bad}")));
        }
        let total = compensated_sum(&probs);
        if (total - 1.0).abs() > 1e-12 {
            return Err(SourceError::InvalidConfiguration(format!("probabilities sum to {total}")));
        }
        let alpha = probs.len() as f64 / n as f64;
        Ok(Self { n, alpha, probs })
    }

    pub fn uniform(n: u64) -> Self {
        Self::from_probs(n, vec![1.0 / n as f64; n as usize]).expect("uniform source is valid")
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Normalized entropy `H(p_n) − ln n`.
    pub fn normalized_entropy(&self) -> f64 {
        -self.probs.iter().map(|p| p * p.ln()).sum::<f64>() - (self.n as f64).ln()
    }
}

/// Quantizes `g` into `⌊αn⌋` equal cells; symbol `a` gets the mass of cell `a`.
pub fn quantize(g: &PiecewiseDensity, n: u64, alpha: f64) -> Result<RareEventsSource, SourceError> {
    let cells = (alpha * n as f64).floor();
    if n == 0 || !(cells >= 1.0) || !cells.is_finite() {
        return Err(SourceError::InvalidConfiguration(format!(
            "floor(alpha * n) = floor({alpha} * {n}) must be at least 1"
        )));
    }
    let cells = cells as usize;
    let width = cells as f64;
    let mut probs: Vec<f64> = (0..cells)
        .map(|a| g.integral(a as f64 / width, (a + 1) as f64 / width))
        .collect();
    let total = compensated_sum(&probs);
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(RareEventsSource { n, alpha, probs })
}

/// Law `P_n` of the shadow variable `n·p_n(X)`, `X ~ p_n`.
pub fn shadow_distribution(s: &RareEventsSource) -> DiscreteMeasure {
    let n = s.n as f64;
    DiscreteMeasure::normalized(s.probs.iter().map(|&p| (n * p, p)))
        .expect("source probabilities are positive")
}

/// Law `P` of `g(W)` with `W ~ g`, for step densities only.
pub fn limit_distribution(g: &PiecewiseDensity) -> Result<DiscreteMeasure, SourceError> {
    if let Some(p) = g.pieces.iter().find(|p| p.a != 0.0) {
        return Err(SourceError::UnsupportedDensity { lo: p.lo, hi: p.hi });
    }
    let atoms = g.pieces.iter().map(|p| (p.b, p.b * (p.hi - p.lo)));
    Ok(DiscreteMeasure::normalized(atoms)?)
}

/// Symbol counts of `n` draws; only observed symbols are stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleRecord {
    pub counts: BTreeMap<usize, u64>,
    pub n: u64,
    pub seed: u64,
}

impl SampleRecord {
    pub fn new(counts: BTreeMap<usize, u64>, seed: u64) -> Self {
        let n = counts.values().sum();
        Self { counts, n, seed }
    }
}

/// Neumaier summation; large alphabets of tiny masses otherwise drift past
/// the normalization tolerance.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Uniform in `[0, 1)` from the top 53 bits of one generator output.
fn next_uniform(rng: &mut Xoshiro256StarStar) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws `n` i.i.d. symbols from `s`.
pub fn sample(s: &RareEventsSource, seed: u64) -> SampleRecord {
    let mut cumulative: Vec<f64> = s
        .probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    *cumulative.last_mut().expect("non-empty source") = 1.0;

    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut dense = vec![0u64; s.probs.len()];
    for _ in 0..s.n {
        let u = next_uniform(&mut rng);
        let idx = cumulative.partition_point(|&c| c <= u).min(dense.len() - 1);
        dense[idx] += 1;
    }
    let counts = dense.into_iter().enumerate().filter(|&(_, c)| c > 0).collect();
    SampleRecord { counts, n: s.n, seed }
}
