//! Least squares, bootstrap significance tests, and grader-log analytics.

use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{self, GradingLogEntry};
use crate::embed::{self, ProgramEmbedding};
use crate::seed;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("x is constant; slope undefined")]
    ConstantX,
    #[error("empty sample")]
    EmptySample,
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error("no validation entries with a true score")]
    NoValidationEntries,
    #[error("no embedding for submission {0:?}")]
    MissingEmbedding(String),
}

/// Ordinary least squares fit of `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when `y` has zero variance.
    pub r2: Option<f64>,
    /// Root mean squared residual.
    pub rmse: f64,
    pub n: usize,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<OlsFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DimensionMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewPoints(n));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if x.iter().all(|&v| v == x[0]) || sxx <= (f64::EPSILON * mx).powi(2) * n as f64 {
        return Err(StatsError::ConstantX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - intercept - slope * xi).powi(2))
        .sum();
    let r2 = (syy > 0.0).then(|| (1.0 - ss_res / syy).clamp(0.0, 1.0));
    Ok(OlsFit {
        slope,
        intercept,
        r2,
        rmse: (ss_res / n as f64).sqrt(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub observed_diff: f64,
    /// Two-sided, add-one corrected: `(#{|d*| >= |d|} + 1) / (n_trials + 1)`.
    pub p_value: f64,
    pub n_trials: usize,
}

fn resampled_mean(pool: &[f64], size: usize, rng: &mut seed::Rng) -> f64 {
    let mut s = 0.0;
    for _ in 0..size {
        s += pool[rng.random_range(0..pool.len())];
    }
    s / size as f64
}

fn add_one_p(extreme: usize, n_trials: usize) -> f64 {
    (extreme + 1) as f64 / (n_trials + 1) as f64
}

/// Tolerance for deciding that a resampled statistic ties the observed one.
fn tie_eps(observed: f64) -> f64 {
    1e-12 * observed.abs().max(1.0)
}

/// Pooled-resampling bootstrap test of `mean(a) - mean(b)`.
pub fn bootstrap_mean_diff(
    a: &[f64],
    b: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<BootstrapResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if n_trials == 0 {
        return Err(StatsError::NoTrials);
    }
    let observed = mean(a) - mean(b);
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let threshold = observed.abs() - tie_eps(observed);
    let extreme = (0..n_trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = seed::rng_for(seed, t as u64);
            let d = resampled_mean(&pool, a.len(), &mut rng) - resampled_mean(&pool, b.len(), &mut rng);
            d.abs() >= threshold
        })
        .count();
    Ok(BootstrapResult {
        observed_diff: observed,
        p_value: add_one_p(extreme, n_trials),
        n_trials,
    })
}

/// Bootstrap test of a nonzero OLS slope. The null distribution resamples
/// `x` and `y` independently, which breaks any pairing between them.
pub fn bootstrap_slope_test(
    x: &[f64],
    y: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<BootstrapResult, StatsError> {
    if n_trials == 0 {
        return Err(StatsError::NoTrials);
    }
    let observed = ols_fit(x, y)?.slope;
    let threshold = observed.abs() - tie_eps(observed);
    let n = x.len();
    let extreme = (0..n_trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = seed::rng_for(seed, t as u64);
            let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                let xi = x[rng.random_range(0..n)];
                let yi = y[rng.random_range(0..n)];
                sx += xi;
                sy += yi;
                sxx += xi * xi;
                sxy += xi * yi;
            }
            let nf = n as f64;
            let var = sxx - sx * sx / nf;
            if var <= 0.0 {
                return true;
            }
            ((sxy - sx * sy / nf) / var).abs() >= threshold
        })
        .count();
    Ok(BootstrapResult {
        observed_diff: observed,
        p_value: add_one_p(extreme, n_trials),
        n_trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraderError {
    /// Mean absolute percent deviation over this grader's validation entries.
    pub mean_pct_error: f64,
    pub n_validations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraderAnalysis {
    pub per_grader: BTreeMap<String, GraderError>,
    /// Assigned percentage regressed on true percentage. `None` if true scores are constant.
    pub fit: Option<OlsFit>,
    /// RMSE between assigned and true percentages.
    pub rmse: f64,
    pub n_entries: usize,
}

/// Error statistics restricted to validation entries.
pub fn grader_error_analysis(logs: &[GradingLogEntry]) -> Result<GraderAnalysis, StatsError> {
    let mut per: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut truth = Vec::new();
    let mut assigned = Vec::new();
    for e in logs.iter().filter(|e| e.is_validation) {
        let Some(t) = e.true_score else { continue };
        let pct = e.percent_error().unwrap();
        let slot = per.entry(e.grader_id.clone()).or_default();
        slot.0 += pct;
        slot.1 += 1;
        truth.push(t / e.max_score * 100.0);
        assigned.push(e.assigned_score / e.max_score * 100.0);
    }
    if truth.is_empty() {
        return Err(StatsError::NoValidationEntries);
    }
    let rmse = (truth
        .iter()
        .zip(&assigned)
        .map(|(t, a)| (a - t).powi(2))
        .sum::<f64>()
        / truth.len() as f64)
        .sqrt();
    let fit = match ols_fit(&truth, &assigned) {
        Ok(f) => Some(f),
        Err(StatsError::ConstantX | StatsError::TooFewPoints(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(GraderAnalysis {
        per_grader: per
            .into_iter()
            .map(|(g, (s, n))| {
                (
                    g,
                    GraderError {
                        mean_pct_error: s / n as f64,
                        n_validations: n,
                    },
                )
            })
            .collect(),
        fit,
        rmse,
        n_entries: truth.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowPair {
    pub grader_id: String,
    pub submission_id: String,
    pub max_similarity: f64,
    pub pct_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowAnalysis {
    pub pairs: Vec<WindowPair>,
    /// Percentage error regressed on window max-similarity; `None` when
    /// fewer than two pairs exist or similarities are constant.
    pub fit: Option<OlsFit>,
    pub window: usize,
    pub include_validation_history: bool,
}

/// For every validation entry, the maximum cosine similarity to the `window`
/// entries the same grader graded just before it. Entries with no history are dropped.
pub fn window_similarity_analysis(
    logs: &[GradingLogEntry],
    embeddings: &[ProgramEmbedding],
    window: usize,
    include_validation_history: bool,
) -> Result<WindowAnalysis, StatsError> {
    let vectors: HashMap<&str, &[f64]> = embeddings
        .iter()
        .map(|e| (e.submission_id.as_str(), e.vector.as_slice()))
        .collect();
    let lookup = |id: &str| {
        vectors
            .get(id)
            .copied()
            .ok_or_else(|| StatsError::MissingEmbedding(id.to_owned()))
    };
    let mut sorted = logs.to_vec();
    corpus::sort_logs(&mut sorted);
    if !sorted.iter().any(|e| e.is_validation && e.true_score.is_some()) {
        return Err(StatsError::NoValidationEntries);
    }
    let mut pairs = Vec::new();
    for (pos, e) in sorted.iter().enumerate() {
        if !e.is_validation {
            continue;
        }
        let Some(pct) = e.percent_error() else { continue };
        let current = lookup(&e.submission_id)?;
        let history = sorted[..pos]
            .iter()
            .rev()
            .take_while(|h| h.grader_id == e.grader_id)
            .filter(|h| include_validation_history || !h.is_validation)
            .take(window);
        let mut best: Option<f64> = None;
        for h in history {
            let s = embed::cosine_similarity(current, lookup(&h.submission_id)?)
                .map_err(|_| StatsError::MissingEmbedding(h.submission_id.clone()))?;
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
        if let Some(max_similarity) = best {
            pairs.push(WindowPair {
                grader_id: e.grader_id.clone(),
                submission_id: e.submission_id.clone(),
                max_similarity,
                pct_error: pct,
            });
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.max_similarity).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.pct_error).collect();
    Ok(WindowAnalysis {
        fit: ols_fit(&xs, &ys).ok(),
        pairs,
        window,
        include_validation_history,
    })
}
