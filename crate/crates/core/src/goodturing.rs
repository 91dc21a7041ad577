//! Occupancy statistics and the Good-Turing pseudo-empirical measure.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::measures::{poisson_mixture, CountDistribution};
use crate::sources::{limit_distribution, PiecewiseDensity, RareEventsSource, SampleRecord, SourceError};

#[derive(Debug, Error)]
pub enum GoodTuringError {
    #[error("symbol {symbol} is outside the source alphabet of size {alphabet}")]
    MismatchedSource { symbol: usize, alphabet: usize },
    #[error("empty sample")]
    EmptySample,
    #[error(transparent)]
    Source(#[from] SourceError),
}

/// `varphi[k]`: number of distinct symbols seen exactly `k ≥ 1` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyCounts {
    pub varphi: BTreeMap<u64, u64>,
    pub n: u64,
}

impl OccupancyCounts {
    /// Largest `k` with `varphi[k] > 0`.
    pub fn max_k(&self) -> u64 {
        self.varphi.keys().next_back().copied().unwrap_or(0)
    }

    /// Number of distinct symbols observed.
    pub fn distinct(&self) -> u64 {
        self.varphi.values().sum()
    }
}

pub fn occupancy(rec: &SampleRecord) -> OccupancyCounts {
    let mut varphi = BTreeMap::new();
    for &c in rec.counts.values().filter(|&&c| c > 0) {
        *varphi.entry(c).or_insert(0) += 1;
    }
    OccupancyCounts { varphi, n: rec.n }
}

/// `φ_{n,k} = (k+1)·varphi[k+1] / n`, stored densely up to the last non-zero
/// index and zero beyond.
pub fn gt_estimator(occ: &OccupancyCounts) -> Result<CountDistribution, GoodTuringError> {
    if occ.n == 0 {
        return Err(GoodTuringError::EmptySample);
    }
    let top = occ.max_k() as usize;
    let n = occ.n as f64;
    let mut masses = vec![0.0; top.max(1)];
    for (&k, &count) in &occ.varphi {
        masses[k as usize - 1] = (k * count) as f64 / n;
    }
    Ok(CountDistribution::new(masses).expect("Good-Turing masses sum to one"))
}

/// `γ_{n,k}`: total probability of the symbols seen exactly `k` times,
/// including `k = 0` for the unseen ones.
pub fn true_gamma(
    s: &RareEventsSource,
    rec: &SampleRecord,
) -> Result<CountDistribution, GoodTuringError> {
    let probs = s.probs();
    if let Some((&symbol, _)) = rec.counts.range(probs.len()..).next() {
        return Err(GoodTuringError::MismatchedSource { symbol, alphabet: probs.len() });
    }
    let top = rec.counts.values().copied().max().unwrap_or(0) as usize;
    let mut masses = vec![0.0; top + 1];
    let mut seen = rec.counts.iter().peekable();
    for (a, &p) in probs.iter().enumerate() {
        let k = match seen.peek() {
            Some(&(&sym, &c)) if sym == a => {
                seen.next();
                c as usize
            }
            _ => 0,
        };
        masses[k] += p;
    }
    Ok(CountDistribution::new(masses).expect("occupancy classes partition the source"))
}

/// Poisson `P`-mixture `λ` for the limit `P` of a step density.
pub fn mixture_target(
    g: &PiecewiseDensity,
    k_max: usize,
) -> Result<CountDistribution, GoodTuringError> {
    let p = limit_distribution(g)?;
    Ok(poisson_mixture(&p, k_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{quantize, sample};

    fn record(counts: &[(usize, u64)]) -> SampleRecord {
        SampleRecord::new(counts.iter().copied().collect(), 0)
    }

    #[test]
    fn occupancy_examples() {
        let occ = occupancy(&record(&[(0, 2), (1, 1)]));
        assert_eq!(occ.varphi, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(occ.n, 3);
        assert_eq!(occupancy(&record(&[(0, 1), (1, 1), (2, 1)])).varphi, BTreeMap::from([(1, 3)]));
        assert_eq!(occupancy(&record(&[(0, 3)])).varphi, BTreeMap::from([(3, 1)]));
    }

    #[test]
    fn gt_examples() {
        let phi = gt_estimator(&occupancy(&record(&[(0, 2), (1, 1)]))).unwrap();
        assert_eq!(phi.masses(), &[1.0 / 3.0, 2.0 / 3.0]);
        let phi = gt_estimator(&occupancy(&record(&[(0, 1), (1, 1), (2, 1)]))).unwrap();
        assert_eq!(phi.masses(), &[1.0]);
        let phi = gt_estimator(&occupancy(&record(&[(0, 3)]))).unwrap();
        assert_eq!(phi.masses(), &[0.0, 0.0, 1.0]);
        assert_eq!(phi.mass(7), 0.0);
    }

    #[test]
    fn gamma_examples() {
        let s = RareEventsSource::from_probs(3, vec![1.0 / 3.0; 3]).unwrap();
        let g = true_gamma(&s, &record(&[(1, 2), (2, 1)])).unwrap();
        assert_eq!(g.masses(), &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);

        let s = RareEventsSource::from_probs(4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = true_gamma(&s, &record(&[(1, 1), (3, 1)])).unwrap();
        assert!((g.mass(0) - (1.0 - 0.2 - 0.4)).abs() < 1e-15);

        let single = RareEventsSource::from_probs(6, vec![1.0]).unwrap();
        let g = true_gamma(&single, &record(&[(0, 6)])).unwrap();
        assert_eq!(g.masses(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

        assert!(matches!(
            true_gamma(&single, &record(&[(3, 6)])),
            Err(GoodTuringError::MismatchedSource { symbol: 3, alphabet: 1 })
        ));
    }

    #[test]
    fn mixture_target_examples() {
        let lam = mixture_target(&PiecewiseDensity::uniform(), 30).unwrap();
        let mut fact = 1.0;
        for k in 0..=30 {
            if k > 0 {
                fact *= k as f64;
            }
            assert!((lam.mass(k) - (-1.0f64).exp() / fact).abs() < 1e-15);
        }
        let g = PiecewiseDensity::step(&[0.0, 0.5, 1.0], &[0.5, 1.5]).unwrap();
        let lam = mixture_target(&g, 40).unwrap();
        assert!((lam.mass(0) - 0.318_980_285_039_480_7).abs() < 1e-14);
        assert!(lam.tail() < 1e-15);
        let sloped = PiecewiseDensity::new(vec![crate::sources::Piece {
            lo: 0.0,
            hi: 1.0,
            a: 1.0,
            b: 0.5,
        }])
        .unwrap();
        assert!(mixture_target(&sloped, 10).is_err());
    }

    #[test]
    fn estimators_sum_to_one_on_samples() {
        let g = PiecewiseDensity::step(&[0.0, 0.5, 1.0], &[0.5, 1.5]).unwrap();
        for (n, seed) in [(10, 1), (1000, 2), (50_000, 3)] {
            let s = quantize(&g, n, 1.0).unwrap();
            let rec = sample(&s, seed);
            let occ = occupancy(&rec);
            let weighted: u64 = occ.varphi.iter().map(|(k, c)| k * c).sum();
            assert_eq!(weighted, n);
            let phi = gt_estimator(&occ).unwrap();
            assert!((phi.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let gamma = true_gamma(&s, &rec).unwrap();
            assert!((gamma.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn random_samples_partition_mass(
            levels in proptest::collection::vec(0.2f64..3.0, 1..5),
            n in 1u64..5000,
            seed in proptest::prelude::any::<u64>(),
        ) {
            let breaks: Vec<f64> = (0..=levels.len()).map(|i| i as f64 / levels.len() as f64).collect();
            // rescale the levels so the density integrates to one
            let mean = levels.iter().sum::<f64>() / levels.len() as f64;
            let scaled: Vec<f64> = levels.iter().map(|l| l / mean).collect();
            let g = PiecewiseDensity::step(&breaks, &scaled).unwrap();
            let s = quantize(&g, n, 1.0).unwrap();
            let rec = sample(&s, seed);
            let phi = gt_estimator(&occupancy(&rec)).unwrap();
            proptest::prop_assert!((phi.masses().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let gamma = true_gamma(&s, &rec).unwrap();
            proptest::prop_assert!((gamma.masses().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
