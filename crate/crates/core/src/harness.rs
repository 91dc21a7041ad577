//! Seeded estimation sweeps over a grid of sample sizes, with JSON-lines and
//! CSV reports and a rate summary.
//!
//! Each `(n, seed)` pair is an independent task: quantize the density at `n`,
//! draw `n` symbols with the seed, form the Good-Turing measure, fit the
//! mixing distribution when a quantity needs it, and emit one row per
//! quantity. Rows are sorted by `n`, seed and quantity name before writing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, Schedule, DEFAULT_SUPPORT_LOG_BASE};
use crate::goodturing::{gt_estimator, occupancy};
use crate::measures::{ks_distance, l1_distance, poisson_mixture, tail_cutoff, wasserstein, DiscreteMeasure};
use crate::mixing::{min_distance, npmle, MinDistConfig, NpmleConfig};
use crate::sources::{
    limit_distribution, quantize, sample, shadow_distribution, DensitySpec, PiecewiseDensity, RareEventsSource,
    SampleRecord,
};

/// Environment variable capping the worker count; `0` or unset means one
/// worker per core.
pub const THREADS_ENV: &str = "RARELOOM_THREADS";

/// Column order of the CSV mirror, identical to the JSON keys.
pub const CSV_HEADER: [&str; 8] =
    ["n", "seed", "quantity", "estimate", "ground_truth", "abs_error", "estimator", "runtime_ms"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("n = {n}, seed = {seed}: {message}")]
    Task { n: u64, seed: u64, message: String },
    #[error("{0}")]
    Source(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error("rate summary needs at least two sample sizes for {quantity}, found {found}")]
    InsufficientCoverage { quantity: String, found: usize },
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config { .. } => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Task { .. } => "task",
            HarnessError::Source(_) => "source",
            HarnessError::Report(_) => "report",
            HarnessError::InsufficientCoverage { .. } => "coverage",
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `H(p_n) − ln n`.
    Entropy,
    /// `(1/n) ln p_n(X^n) + ln n`.
    Seqprob,
    /// `|A_n| / n`.
    Alphabet,
    /// Lower end of the support of `P_n`.
    SupportLo,
    /// Upper end of the support of `P_n`.
    SupportHi,
    /// `‖φ_n − λ‖₁`.
    GtL1,
    /// `sup_k |F(k; λ) − F(k; φ_n)|`.
    GtKs,
    /// `d_W(P̃_n, P)`.
    MixingWass,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::Entropy,
        Quantity::Seqprob,
        Quantity::Alphabet,
        Quantity::SupportLo,
        Quantity::SupportHi,
        Quantity::GtL1,
        Quantity::GtKs,
        Quantity::MixingWass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Entropy => "entropy",
            Quantity::Seqprob => "seqprob",
            Quantity::Alphabet => "alphabet",
            Quantity::SupportLo => "support_lo",
            Quantity::SupportHi => "support_hi",
            Quantity::GtL1 => "gt_l1",
            Quantity::GtKs => "gt_ks",
            Quantity::MixingWass => "mixing_wass",
        }
    }

    fn needs_fit(self) -> bool {
        !matches!(self, Quantity::GtL1 | Quantity::GtKs)
    }

    fn needs_limit(self) -> bool {
        matches!(self, Quantity::GtL1 | Quantity::GtKs | Quantity::MixingWass)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quantity::ALL.into_iter().find(|q| q.name() == s).ok_or_else(|| {
            let names: Vec<_> = Quantity::ALL.iter().map(|q| q.name()).collect();
            format!("unknown quantity {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Mixing-distribution estimator and its settings. Unset fields take the
/// data-driven defaults of the underlying configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Npmle {
        #[serde(default)]
        grid_points: Option<usize>,
        #[serde(default)]
        dd_tol: Option<f64>,
        #[serde(default)]
        max_iters: Option<usize>,
        #[serde(default)]
        weight_floor: Option<f64>,
    },
    Mindist {
        m: usize,
        /// Precision `ε_n = n^{−epsilon_exponent}`.
        #[serde(default = "default_epsilon_exponent")]
        epsilon_exponent: f64,
        #[serde(default)]
        coarse_grid: Option<usize>,
        #[serde(default)]
        refine_rounds: Option<usize>,
    },
}

fn default_epsilon_exponent() -> f64 {
    0.6
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Npmle { .. } => "npmle",
            EstimatorSpec::Mindist { .. } => "mindist",
        }
    }

    /// Defaults for an estimator named on the command line.
    pub fn from_name(name: &str) -> Result<Self, String> {
        match name {
            "npmle" => Ok(EstimatorSpec::Npmle { grid_points: None, dd_tol: None, max_iters: None, weight_floor: None }),
            "mindist" => Ok(EstimatorSpec::Mindist {
                m: 2,
                epsilon_exponent: default_epsilon_exponent(),
                coarse_grid: None,
                refine_rounds: None,
            }),
            other => Err(format!("unknown estimator {other:?}; expected npmle or mindist")),
        }
    }

    pub fn fit(&self, phi: &crate::measures::CountDistribution, n: u64) -> Result<DiscreteMeasure, String> {
        match *self {
            EstimatorSpec::Npmle { grid_points, dd_tol, max_iters, weight_floor } => {
                let mut cfg = NpmleConfig::for_data(phi);
                cfg.grid_points = grid_points.unwrap_or(cfg.grid_points);
                cfg.dd_tol = dd_tol.unwrap_or(cfg.dd_tol);
                cfg.max_iters = max_iters.unwrap_or(cfg.max_iters);
                cfg.weight_floor = weight_floor.unwrap_or(cfg.weight_floor);
                npmle(phi, &cfg).map(|r| r.0).map_err(|e| e.to_string())
            }
            EstimatorSpec::Mindist { m, epsilon_exponent, coarse_grid, refine_rounds } => {
                let epsilon = (n as f64).powf(-epsilon_exponent);
                let mut cfg = MinDistConfig::for_data(phi, m, epsilon);
                cfg.coarse_grid = coarse_grid.unwrap_or(cfg.coarse_grid);
                cfg.refine_rounds = refine_rounds.unwrap_or(cfg.refine_rounds);
                min_distance(phi, &cfg).map(|r| r.0).map_err(|e| e.to_string())
            }
        }
    }
}

/// A density file (relative paths resolve against the config file) or an
/// inline table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensityRef {
    File(PathBuf),
    Inline(DensitySpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub density: DensityRef,
    pub n_grid: Vec<u64>,
    pub seeds: Vec<u64>,
    pub estimator: EstimatorSpec,
    pub quantities: Vec<Quantity>,
    /// Taper schedule for the entropy, sequence-probability and alphabet
    /// estimators.
    #[serde(default)]
    pub schedule: Schedule,
    /// Schedule for the support estimator; the fallback kind selects the
    /// unknown-`s` rule.
    #[serde(default)]
    pub support_schedule: Schedule,
    #[serde(default = "default_log_base")]
    pub support_log_base: f64,
    /// JSON-lines report path; the CSV mirror goes next to it.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// When false, `runtime_ms` is null and reports are byte-reproducible.
    #[serde(default = "default_true")]
    pub record_timing: bool,
    /// Exponents for the scaled columns of the rate summary.
    #[serde(default)]
    pub betas: Vec<f64>,
    /// Added to every seed before sampling.
    #[serde(default)]
    pub seed_offset: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_log_base() -> f64 {
    DEFAULT_SUPPORT_LOG_BASE
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Parses and validates; `origin` names the config in error messages and
    /// `base_dir` anchors relative paths.
    pub fn from_toml_str(text: &str, origin: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: Self = toml::from_str(text)
            .map_err(|e| HarnessError::Config { path: origin.to_string(), message: e.to_string() })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()
            .map_err(|message| HarnessError::Config { path: origin.to_string(), message })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &path.display().to_string(), &base)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_grid.is_empty() {
            return Err("n_grid: must not be empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("n_grid: must be strictly ascending, got {:?}", self.n_grid));
        }
        if self.n_grid[0] == 0 {
            return Err("n_grid: sample sizes must be positive".into());
        }
        if self.seeds.is_empty() {
            return Err("seeds: must not be empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err("seeds: must be distinct".into());
        }
        if self.seeds.iter().any(|s| s.checked_add(self.seed_offset).is_none()) {
            return Err("seed_offset: overflows a seed".into());
        }
        if self.quantities.is_empty() {
            return Err("quantities: must not be empty".into());
        }
        if self.quantities.iter().collect::<BTreeSet<_>>().len() != self.quantities.len() {
            return Err("quantities: must be distinct".into());
        }
        self.schedule.validate().map_err(|e| format!("schedule: {e}"))?;
        self.support_schedule.validate().map_err(|e| format!("support_schedule: {e}"))?;
        if !(self.support_log_base > 1.0) || !self.support_log_base.is_finite() {
            return Err(format!("support_log_base: must exceed 1, got {}", self.support_log_base));
        }
        match self.estimator {
            EstimatorSpec::Mindist { m, epsilon_exponent, .. } => {
                if m == 0 {
                    return Err("estimator.m: must be at least 1".into());
                }
                if !(epsilon_exponent > 0.0) || !epsilon_exponent.is_finite() {
                    return Err("estimator.epsilon_exponent: must be positive".into());
                }
            }
            EstimatorSpec::Npmle { grid_points, .. } => {
                if grid_points.is_some_and(|g| g < 2) {
                    return Err("estimator.grid_points: must be at least 2".into());
                }
            }
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return Err("betas: must be finite".into());
        }
        Ok(())
    }

    pub fn density_spec(&self) -> Result<DensitySpec, HarnessError> {
        match &self.density {
            DensityRef::Inline(spec) => Ok(spec.clone()),
            DensityRef::File(path) => {
                let full = self.base_dir.join(path);
                DensitySpec::load(&full)
                    .map_err(|e| HarnessError::Source(format!("{}: {e}", full.display())))
            }
        }
    }

    /// Path of the CSV mirror of `jsonl`.
    pub fn csv_path(jsonl: &Path) -> PathBuf {
        jsonl.with_extension("csv")
    }
}

/// One row of output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: u64,
    pub seed: u64,
    pub quantity: String,
    pub estimate: f64,
    pub ground_truth: Option<f64>,
    pub abs_error: Option<f64>,
    pub estimator: String,
    pub runtime_ms: Option<f64>,
}

struct Prepared {
    g: PiecewiseDensity,
    alpha: f64,
    limit: Option<DiscreteMeasure>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let spec = cfg.density_spec()?;
    let g = spec.density().map_err(|e| HarnessError::Source(e.to_string()))?;
    let limit = if g.is_step() {
        Some(limit_distribution(&g).map_err(|e| HarnessError::Source(e.to_string()))?)
    } else {
        None
    };
    if limit.is_none() {
        if let Some(q) = cfg.quantities.iter().find(|q| q.needs_limit()) {
            return Err(HarnessError::Source(format!(
                "quantity {q} needs the exact limit measure, which only step densities provide"
            )));
        }
    }
    Ok(Prepared { g, alpha: spec.alpha, limit })
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| HarnessError::Config {
            path: THREADS_ENV.into(),
            message: format!("expected a non-negative integer, got {v:?}"),
        })?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config { path: THREADS_ENV.into(), message: e.to_string() })?;
    Ok(pool.install(f))
}

fn sources(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<RareEventsSource>, HarnessError> {
    cfg.n_grid
        .par_iter()
        .map(|&n| quantize(&prep.g, n, prep.alpha).map_err(|e| HarnessError::Source(format!("n = {n}: {e}"))))
        .collect()
}

fn tasks(cfg: &ExperimentConfig) -> Vec<(usize, u64)> {
    (0..cfg.n_grid.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s + cfg.seed_offset)))
        .collect()
}

/// Runs every `(n, seed)` task and returns the rows in output order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<EstimateReport>, HarnessError> {
    cfg.validate().map_err(|message| HarnessError::Config { path: "<in-memory>".into(), message })?;
    let prep = prepare(cfg)?;
    let rows = with_pool(|| -> Result<Vec<EstimateReport>, HarnessError> {
        let sources = sources(cfg, &prep)?;
        let chunks: Vec<Vec<EstimateReport>> = tasks(cfg)
            .par_iter()
            .map(|&(i, seed)| {
                let n = cfg.n_grid[i];
                run_task(cfg, &prep, &sources[i], seed)
                    .map_err(|message| HarnessError::Task { n, seed, message })
            })
            .collect::<Result<_, _>>()?;
        Ok(chunks.into_iter().flatten().collect())
    })??;
    let mut rows = rows;
    rows.sort_by(|a, b| (a.n, a.seed, &a.quantity).cmp(&(b.n, b.seed, &b.quantity)));
    Ok(rows)
}

fn run_task(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    source: &RareEventsSource,
    seed: u64,
) -> Result<Vec<EstimateReport>, String> {
    let start = Instant::now();
    let n = source.n();
    let rec = sample(source, seed);
    let phi = gt_estimator(&occupancy(&rec)).map_err(|e| e.to_string())?;
    let fitted = if cfg.quantities.iter().any(|q| q.needs_fit()) {
        Some(cfg.estimator.fit(&phi, n)?)
    } else {
        None
    };
    let shadow = shadow_distribution(source);
    let lambda = prep.limit.as_ref().map(|p| {
        let k_max = phi.k_max().max(tail_cutoff(p.support().1));
        poisson_mixture(p, k_max)
    });

    let mut support = None;
    let mut values = Vec::with_capacity(cfg.quantities.len());
    for &q in &cfg.quantities {
        let p_tilde = || fitted.as_ref().expect("fit computed for this quantity");
        let mut support_of = |p: &DiscreteMeasure| -> Result<canonical::SupportEstimate, String> {
            if support.is_none() {
                support = Some(
                    canonical::estimate_support(p, &cfg.support_schedule, n, cfg.support_log_base)
                        .map_err(|e| e.to_string())?,
                );
            }
            Ok(support.expect("just set"))
        };
        let err = |e: canonical::CanonicalError| e.to_string();
        let (estimate, truth, estimator) = match q {
            Quantity::Entropy => (
                canonical::estimate_entropy(p_tilde(), &cfg.schedule, n).map_err(err)?,
                source.normalized_entropy(),
                cfg.estimator.name(),
            ),
            Quantity::Seqprob => (
                canonical::estimate_seq_logprob(p_tilde(), &cfg.schedule, n).map_err(err)?,
                sequence_logprob(source, &rec),
                cfg.estimator.name(),
            ),
            Quantity::Alphabet => (
                canonical::estimate_alphabet_size(p_tilde(), &cfg.schedule, n).map_err(err)?,
                source.alphabet_size() as f64 / n as f64,
                cfg.estimator.name(),
            ),
            Quantity::SupportLo => (support_of(p_tilde())?.c_lo, shadow.support().0, cfg.estimator.name()),
            Quantity::SupportHi => (support_of(p_tilde())?.c_hi, shadow.support().1, cfg.estimator.name()),
            Quantity::GtL1 => (l1_distance(&phi, lambda.as_ref().expect("step density")), 0.0, "good_turing"),
            Quantity::GtKs => (ks_distance(&phi, lambda.as_ref().expect("step density")), 0.0, "good_turing"),
            Quantity::MixingWass => (
                wasserstein(p_tilde(), prep.limit.as_ref().expect("step density")),
                0.0,
                cfg.estimator.name(),
            ),
        };
        if !estimate.is_finite() {
            return Err(format!("{q} estimate is {estimate}"));
        }
        values.push((q, estimate, truth, estimator));
    }

    let runtime_ms = cfg.record_timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    Ok(values
        .into_iter()
        .map(|(q, estimate, truth, estimator)| EstimateReport {
            n,
            seed,
            quantity: q.name().to_string(),
            estimate,
            ground_truth: Some(truth),
            abs_error: Some((estimate - truth).abs()),
            estimator: estimator.to_string(),
            runtime_ms,
        })
        .collect())
}

/// `(1/n) Σ_a count_a ln p_a + ln n` for the realized sample.
fn sequence_logprob(source: &RareEventsSource, rec: &SampleRecord) -> f64 {
    let probs = source.probs();
    let n = rec.n as f64;
    rec.counts.iter().map(|(&a, &c)| c as f64 * probs[a].ln()).sum::<f64>() / n + n.ln()
}

pub fn to_jsonl(reports: &[EstimateReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("reports serialize"));
        out.push('\n');
    }
    out
}

pub fn to_csv(reports: &[EstimateReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).expect("reports serialize");
    }
    if reports.is_empty() {
        w.write_record(CSV_HEADER).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv is utf-8")
}

pub fn parse_jsonl(text: &str) -> Result<Vec<EstimateReport>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| HarnessError::Report(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn parse_csv(text: &str) -> Result<Vec<EstimateReport>, HarnessError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| HarnessError::Report(e.to_string())))
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Writes the JSON-lines report to `path` and its CSV mirror beside it.
pub fn write_reports(reports: &[EstimateReport], path: &Path) -> Result<PathBuf, HarnessError> {
    write_file(path, &to_jsonl(reports))?;
    let csv_path = ExperimentConfig::csv_path(path);
    write_file(&csv_path, &to_csv(reports))?;
    Ok(csv_path)
}

/// Source and ground-truth description for one `(n, seed)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationRecord {
    pub n: u64,
    pub seed: u64,
    pub alphabet_size: usize,
    pub distinct: u64,
    /// `(k, varphi_k)` pairs.
    pub occupancy: Vec<(u64, u64)>,
    pub normalized_entropy: f64,
    /// The shadow law `P_n`.
    pub shadow: DiscreteMeasure,
    /// The limit `P`, for step densities.
    pub limit: Option<DiscreteMeasure>,
}

/// Builds the sources and samples without estimating anything.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<SimulationRecord>, HarnessError> {
    cfg.validate().map_err(|message| HarnessError::Config { path: "<in-memory>".into(), message })?;
    let spec = cfg.density_spec()?;
    let g = spec.density().map_err(|e| HarnessError::Source(e.to_string()))?;
    let limit = if g.is_step() { limit_distribution(&g).ok() } else { None };
    let prep = Prepared { g, alpha: spec.alpha, limit };
    with_pool(|| -> Result<Vec<SimulationRecord>, HarnessError> {
        let sources = sources(cfg, &prep)?;
        Ok(tasks(cfg)
            .par_iter()
            .map(|&(i, seed)| {
                let s = &sources[i];
                let occ = occupancy(&sample(s, seed));
                SimulationRecord {
                    n: s.n(),
                    seed,
                    alphabet_size: s.alphabet_size(),
                    distinct: occ.distinct(),
                    occupancy: occ.varphi.into_iter().collect(),
                    normalized_entropy: s.normalized_entropy(),
                    shadow: shadow_distribution(s),
                    limit: prep.limit.clone(),
                }
            })
            .collect())
    })?
}

pub fn simulation_jsonl(records: &[SimulationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub quantity: String,
    pub n: u64,
    pub seeds: usize,
    pub mean_abs_error: f64,
    /// `mean_abs_error · n^β`, one entry per configured β.
    pub scaled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub betas: Vec<f64>,
    pub rows: Vec<RateRow>,
}

impl RateTable {
    /// Rows of one quantity, ascending in `n`.
    pub fn series(&self, quantity: &str) -> Vec<&RateRow> {
        self.rows.iter().filter(|r| r.quantity == quantity).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["quantity".to_string(), "n".into(), "seeds".into(), "mean_abs_error".into()];
        header.extend(self.betas.iter().map(|b| format!("scaled_beta_{b}")));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut record = vec![r.quantity.clone(), r.n.to_string(), r.seeds.to_string(), r.mean_abs_error.to_string()];
            record.extend(r.scaled.iter().map(|v| v.to_string()));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv is utf-8")
    }
}

/// Seed-averaged absolute error per quantity and `n`, with scaled columns.
/// Rows without a ground truth are ignored.
pub fn summarize(reports: &[EstimateReport], betas: &[f64]) -> Result<RateTable, HarnessError> {
    let mut groups: BTreeMap<(&str, u64), Vec<f64>> = BTreeMap::new();
    for r in reports {
        if let Some(e) = r.abs_error {
            groups.entry((r.quantity.as_str(), r.n)).or_default().push(e);
        }
    }
    let mut coverage: BTreeMap<&str, usize> = BTreeMap::new();
    for &(q, _) in groups.keys() {
        *coverage.entry(q).or_default() += 1;
    }
    if coverage.is_empty() {
        return Err(HarnessError::InsufficientCoverage { quantity: "<any>".into(), found: 0 });
    }
    if let Some((q, &found)) = coverage.iter().find(|(_, &c)| c < 2) {
        return Err(HarnessError::InsufficientCoverage { quantity: q.to_string(), found });
    }
    let rows = groups
        .into_iter()
        .map(|((q, n), errors)| {
            let mean = errors.iter().sum::<f64>() / errors.len() as f64;
            RateRow {
                quantity: q.to_string(),
                n,
                seeds: errors.len(),
                mean_abs_error: mean,
                scaled: betas.iter().map(|&b| mean * (n as f64).powf(b)).collect(),
            }
        })
        .collect();
    Ok(RateTable { betas: betas.to_vec(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text, "test", Path::new(".")).unwrap()
    }

    const TWO_STEP: &str = r#"
[density]
alpha = 1.0
pieces = [{ lo = 0.0, hi = 0.5, b = 0.5 }, { lo = 0.5, hi = 1.0, b = 1.5 }]
"#;

    fn base(extra: &str) -> String {
        format!(
            "n_grid = [100]\nseeds = [1]\nquantities = [\"gt_l1\"]\nrecord_timing = false\n{extra}\n[estimator]\nkind = \"npmle\"\n{TWO_STEP}"
        )
    }

    #[test]
    fn single_row_contract() {
        let rows = run_experiment(&config(&base(""))).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].quantity, "gt_l1");
        assert_eq!(rows[0].estimator, "good_turing");
        assert_eq!(rows[0].runtime_ms, None);
        assert_eq!(rows[0].abs_error, Some(rows[0].estimate));
    }

    #[test]
    fn config_errors_name_the_field() {
        let bad = base("").replace("n_grid = [100]", "n_grid = [100, 10]");
        let err = ExperimentConfig::from_toml_str(&bad, "cfg.toml", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("n_grid"), "{err}");
        let bad = base("").replace("seeds = [1]", "seeds = [1, 1]");
        assert!(ExperimentConfig::from_toml_str(&bad, "c", Path::new(".")).is_err());
        let bad = base("bogus = 3");
        let err = ExperimentConfig::from_toml_str(&bad, "c", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("bogus") && err.to_string().contains("line"), "{err}");
        let bad = base("").replace("\"gt_l1\"", "\"support\"");
        assert!(ExperimentConfig::from_toml_str(&bad, "c", Path::new(".")).is_err());
    }

    #[test]
    fn sloped_density_rejects_limit_quantities() {
        let text = base("").replace(TWO_STEP, "[density]\npieces = [{ lo = 0.0, hi = 1.0, a = 1.0, b = 0.5 }]\n");
        let err = run_experiment(&config(&text)).unwrap_err();
        assert_eq!(err.kind(), "source");
        let ok = text.replace("\"gt_l1\"", "\"alphabet\"");
        let rows = run_experiment(&config(&ok)).unwrap();
        assert_eq!(rows[0].ground_truth, Some(1.0));
    }

    fn report(n: u64, seed: u64, error: f64) -> EstimateReport {
        EstimateReport {
            n,
            seed,
            quantity: "gt_ks".into(),
            estimate: error,
            ground_truth: Some(0.0),
            abs_error: Some(error),
            estimator: "good_turing".into(),
            runtime_ms: None,
        }
    }

    #[test]
    fn summarize_examples() {
        let reports = [report(100, 1, 0.1), report(10_000, 1, 0.01)];
        let table = summarize(&reports, &[0.0, 0.5]).unwrap();
        assert_eq!(table.rows.len(), 2);
        for r in &table.rows {
            assert_eq!(r.scaled[0], r.mean_abs_error);
        }
        assert!((table.rows[0].scaled[1] - 1.0).abs() < 1e-12);
        assert!((table.rows[1].scaled[1] - 1.0).abs() < 1e-12);

        let averaged = summarize(&[report(100, 1, 0.1), report(100, 2, 0.3), report(1000, 1, 0.0)], &[]).unwrap();
        assert!((averaged.rows[0].mean_abs_error - 0.2).abs() < 1e-15);
        assert_eq!(averaged.rows[0].seeds, 2);

        let err = summarize(&[report(100, 1, 0.1)], &[0.0]).unwrap_err();
        assert!(matches!(err, HarnessError::InsufficientCoverage { found: 1, .. }));
    }

    #[test]
    fn csv_and_jsonl_round_trip() {
        let mut rows = vec![report(100, 1, 0.125), report(1000, 2, 1e-17)];
        rows[1].ground_truth = None;
        rows[1].abs_error = None;
        rows[1].runtime_ms = Some(3.5);
        assert_eq!(parse_jsonl(&to_jsonl(&rows)).unwrap(), rows);
        assert_eq!(parse_csv(&to_csv(&rows)).unwrap(), rows);
        assert!(to_csv(&rows).starts_with(&CSV_HEADER.join(",")));
        assert!(to_csv(&[]).starts_with(&CSV_HEADER.join(",")));
    }
}
