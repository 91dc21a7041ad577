//! Tapered integrands, plug-in integration against an estimated mixing
//! measure, and the entropy, sequence-probability, alphabet-size and support
//! estimators built from them.
//!
//! A tapered function clamps its argument to `[lo, hi]` before evaluating the
//! base; the symmetric case `[1/D, D]` is the usual one and the asymmetric
//! case serves known-bound schedules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::DiscreteMeasure;

/// Logarithm base for the support schedule's `log n` and `log log n`.
pub const DEFAULT_SUPPORT_LOG_BASE: f64 = 10.0;
/// Smallest `n` the support estimator accepts.
pub const SUPPORT_MIN_N: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonicalError {
    #[error("{0:?} tapered at [{1}, {2}] is unbounded")]
    Unbounded(Base, f64, f64),
    #[error("invalid taper bounds [{0}, {1}]")]
    BadBounds(f64, f64),
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("n = {n} is too small: {reason}")]
    SmallN { n: u64, reason: &'static str },
    #[error("{0} schedules cannot drive the support estimator")]
    UnsupportedSchedule(&'static str),
}

/// Named integrands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    Log,
    NegLog,
    Reciprocal,
    Power(f64),
}

/// How the Lipschitz constant of the taper grows with `D`; decides the
/// exponent a power schedule uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzClass {
    /// `Lip ∝ D`, schedule `D_n = n^s`.
    Linear,
    /// `Lip ∝ D²`, schedule `D_n = n^{s/2}`.
    Quadratic,
}

impl Base {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Base::Log => x.ln(),
            Base::NegLog => -x.ln(),
            Base::Reciprocal => x.recip(),
            Base::Power(q) => x.powf(q),
        }
    }

    /// `|f'(x)|`.
    fn slope(self, x: f64) -> f64 {
        match self {
            Base::Log | Base::NegLog => x.recip(),
            Base::Reciprocal => x.powi(-2),
            Base::Power(q) => q.abs() * x.powf(q - 1.0),
        }
    }

    pub fn class(self) -> LipschitzClass {
        match self {
            Base::Log | Base::NegLog => LipschitzClass::Linear,
            Base::Reciprocal => LipschitzClass::Quadratic,
            Base::Power(_) => LipschitzClass::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperedFunction {
    base: Base,
    lo: f64,
    hi: f64,
}

impl TaperedFunction {
    /// The `D`-tapered version of `base`, clamped to `[1/D, D]`. `D = ∞` is
    /// allowed; integration then fails for the unbounded bases.
    pub fn new(base: Base, d: f64) -> Result<Self, CanonicalError> {
        if !(d >= 1.0) {
            return Err(CanonicalError::BadBounds(d.recip(), d));
        }
        Self::with_bounds(base, d.recip(), d)
    }

    pub fn with_bounds(base: Base, lo: f64, hi: f64) -> Result<Self, CanonicalError> {
        if !(lo >= 0.0) || !(hi >= lo) || hi == 0.0 || lo.is_infinite() {
            return Err(CanonicalError::BadBounds(lo, hi));
        }
        if let Base::Power(q) = base {
            if !(q != 0.0 && q.is_finite()) {
                return Err(CanonicalError::BadSchedule(format!("power exponent {q}")));
            }
        }
        Ok(Self { base, lo, hi })
    }

    pub fn base(&self) -> Base {
        self.base
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn check_bounded(&self) -> Result<(), CanonicalError> {
        let bounded = self.base.eval(self.lo).is_finite() && self.base.eval(self.hi).is_finite();
        if bounded {
            Ok(())
        } else {
            Err(CanonicalError::Unbounded(self.base, self.lo, self.hi))
        }
    }

    /// Exact Lipschitz constant on `ℝ⁺`: the largest slope of the base on the
    /// clamp interval, attained at one of its ends.
    pub fn lipschitz_constant(&self) -> Result<f64, CanonicalError> {
        self.check_bounded()?;
        let lip = self.base.slope(self.lo).max(self.base.slope(self.hi));
        if lip.is_finite() {
            Ok(lip)
        } else {
            Err(CanonicalError::Unbounded(self.base, self.lo, self.hi))
        }
    }
}

/// `f(min(max(x, lo), hi))`.
pub fn taper_eval(f: &TaperedFunction, x: f64) -> f64 {
    f.base.eval(x.clamp(f.lo, f.hi))
}

/// `Σ_j w_j f_D(x_j)`.
pub fn integrate(p: &DiscreteMeasure, f: &TaperedFunction) -> Result<f64, CanonicalError> {
    f.check_bounded()?;
    Ok(p.expect(|x| taper_eval(f, x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Fixed { d: f64 },
    /// Polynomial growth; the exponent is halved for quadratic Lipschitz
    /// growth.
    Power { s: f64 },
    /// `D_n = e^{(ln n)^ε}`, for unknown `s`.
    Fallback { epsilon: f64 },
    /// Known support bounds; the taper sits at `[d_min, d_max]`.
    KnownBounds { d_min: f64, d_max: f64, s: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Fallback { epsilon: 0.5 }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<(), CanonicalError> {
        let ok = match *self {
            Schedule::Fixed { d } => d >= 1.0 && d.is_finite(),
            Schedule::Power { s } => s > 0.0 && s.is_finite(),
            Schedule::Fallback { epsilon } => epsilon > 0.0 && epsilon < 1.0,
            Schedule::KnownBounds { d_min, d_max, s } => {
                d_min > 0.0 && d_max > d_min && d_max.is_finite() && s > 0.0 && s.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CanonicalError::BadSchedule(format!("{self:?}")))
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Schedule::Fixed { .. } => "fixed",
            Schedule::Power { .. } => "power",
            Schedule::Fallback { .. } => "fallback",
            Schedule::KnownBounds { .. } => "known_bounds",
        }
    }

    /// Taper bounds for an integrand of the given class at sample size `n`.
    pub fn bounds(&self, class: LipschitzClass, n: u64) -> Result<(f64, f64), CanonicalError> {
        if let Schedule::KnownBounds { d_min, d_max, .. } = *self {
            self.validate()?;
            return Ok((d_min, d_max));
        }
        let d = schedule_d(self, class, n)?;
        Ok((d.recip(), d))
    }
}

/// `D_n` for the given schedule and Lipschitz class. Known-bound schedules
/// report the symmetric `D` covering `[d_min, d_max]`.
pub fn schedule_d(sch: &Schedule, class: LipschitzClass, n: u64) -> Result<f64, CanonicalError> {
    sch.validate()?;
    if n == 0 {
        return Err(CanonicalError::SmallN { n, reason: "no samples" });
    }
    let ln_n = (n as f64).ln();
    Ok(match *sch {
        Schedule::Fixed { d } => d,
        Schedule::Power { s } => match class {
            LipschitzClass::Linear => (s * ln_n).exp(),
            LipschitzClass::Quadratic => (0.5 * s * ln_n).exp(),
        },
        Schedule::Fallback { epsilon } => fallback_ln_d(epsilon, ln_n).exp(),
        Schedule::KnownBounds { d_min, d_max, .. } => d_max.max(d_min.recip()).max(1.0),
    })
}

/// `ln D_n = (ln n)^ε`.
pub(crate) fn fallback_ln_d(epsilon: f64, ln_n: f64) -> f64 {
    ln_n.powf(epsilon)
}

fn tapered(sch: &Schedule, base: Base, n: u64) -> Result<TaperedFunction, CanonicalError> {
    let (lo, hi) = sch.bounds(base.class(), n)?;
    TaperedFunction::with_bounds(base, lo, hi)
}

/// `−∫ log_{D_n} x dP̃(x)`, estimating `H(p_n) − ln n`.
pub fn estimate_entropy(p_tilde: &DiscreteMeasure, sch: &Schedule, n: u64) -> Result<f64, CanonicalError> {
    integrate(p_tilde, &tapered(sch, Base::NegLog, n)?)
}

/// `(1/n) ln p_n(X^n) + ln n`, estimated as the negated entropy estimate.
pub fn estimate_seq_logprob(p_tilde: &DiscreteMeasure, sch: &Schedule, n: u64) -> Result<f64, CanonicalError> {
    Ok(-estimate_entropy(p_tilde, sch, n)?)
}

/// `∫ x⁻¹_{D_n} dP̃(x)`, estimating `|A_n| / n`.
pub fn estimate_alphabet_size(p_tilde: &DiscreteMeasure, sch: &Schedule, n: u64) -> Result<f64, CanonicalError> {
    integrate(p_tilde, &tapered(sch, Base::Reciprocal, n)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportEstimate {
    /// `(∫ x_D^{−q} dP̃)^{−1/q}`, the estimate of the lower support end.
    pub c_lo: f64,
    /// `(∫ x_D^{q} dP̃)^{1/q}`.
    pub c_hi: f64,
    /// `(∫ x_D^{−q} dP̃)^{1/q}`, the reciprocal of `c_lo`.
    pub raw_lo: f64,
    pub q: f64,
    /// Taper interval.
    pub lo: f64,
    pub hi: f64,
}

/// Power means of order `±q_n` of `P̃` tapered at the schedule's bounds.
///
/// Power schedules use `q_n = log n / log log n`, `D_n = n^{s/(2q_n)}`;
/// fallback schedules use the same `q_n` with `D_n = n^{1/(q_n √(log log n))}`
/// (ε plays no role); known-bound schedules use
/// `q_n = (s/2) ln n / ln(d_max/d_min)` and taper at the bounds. The logs in
/// `q_n` and `log log n` are to `log_base`.
pub fn estimate_support(
    p_tilde: &DiscreteMeasure,
    sch: &Schedule,
    n: u64,
    log_base: f64,
) -> Result<SupportEstimate, CanonicalError> {
    sch.validate()?;
    if !(log_base > 1.0) || !log_base.is_finite() {
        return Err(CanonicalError::BadSchedule(format!("log base {log_base}")));
    }
    if n < SUPPORT_MIN_N {
        return Err(CanonicalError::SmallN { n, reason: "the support estimator needs n >= 16" });
    }
    let ln_n = (n as f64).ln();
    let log_n = ln_n / log_base.ln();
    let log_log_n = log_n.ln() / log_base.ln();
    let needs_loglog = !matches!(sch, Schedule::KnownBounds { .. });
    if needs_loglog && !(log_log_n > 0.0) {
        return Err(CanonicalError::SmallN { n, reason: "log log n must be positive" });
    }
    let (q, lo, hi) = match *sch {
        Schedule::Fixed { .. } => return Err(CanonicalError::UnsupportedSchedule(sch.name())),
        Schedule::Power { s } => {
            let q = log_n / log_log_n;
            let d = (s * ln_n / (2.0 * q)).exp();
            (q, d.recip(), d)
        }
        Schedule::Fallback { .. } => {
            let q = log_n / log_log_n;
            let d = (ln_n / (q * log_log_n.sqrt())).exp();
            (q, d.recip(), d)
        }
        Schedule::KnownBounds { d_min, d_max, s } => ((s / 2.0) * ln_n / (d_max / d_min).ln(), d_min, d_max),
    };

    if p_tilde.len() == 1 {
        let c = p_tilde.locations()[0].clamp(lo, hi);
        return Ok(SupportEstimate { c_lo: c, c_hi: c, raw_lo: c.recip(), q, lo, hi });
    }
    let ln_lo = power_log_mean(p_tilde, -q, lo, hi);
    let ln_hi = power_log_mean(p_tilde, q, lo, hi);
    Ok(SupportEstimate {
        c_lo: (-ln_lo).exp(),
        c_hi: ln_hi.exp(),
        raw_lo: ln_lo.exp(),
        q,
        lo,
        hi,
    })
}

/// `(1/|r|) ln ∫ x_D^r dP̃`, by log-sum-exp.
fn power_log_mean(p: &DiscreteMeasure, r: f64, lo: f64, hi: f64) -> f64 {
    let terms: Vec<f64> = p
        .atoms()
        .map(|(x, w)| w.ln() + r * x.clamp(lo, hi).ln())
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    lse / r.abs()
}
