//! Grading-error simulation: a linear model maps the best similarity within
//! a recent window of a grader's queue to a predicted percentage error.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{self, Algorithm, Assignment, AssignmentConfig};
use crate::embed::{self, ProgramEmbedding, SimilarityMatrix};
use crate::seed;
use crate::stats;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimulateError {
    #[error("queued submission {0:?} has no similarity row")]
    UnknownSubmissionInQueue(String),
    #[error("grader {0} has no regular submissions")]
    GraderHasNoRegularSubmissions(usize),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorModel {
    pub intercept: f64,
    pub slope: f64,
    pub min_error: f64,
    pub max_error: f64,
}

impl Default for ErrorModel {
    /// Passes through (1.0, 2.7%) and (0.85, 10.2%).
    fn default() -> Self {
        Self {
            intercept: 52.7,
            slope: -50.0,
            min_error: 0.0,
            max_error: 100.0,
        }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if !(self.min_error >= 0.0 && self.min_error <= self.max_error) {
            return Err(SimulateError::InvalidConfig(
                "error model needs 0 <= min_error <= max_error".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub window: usize,
    pub cold_start_similarity: f64,
    pub error_model: ErrorModel,
    pub seed: u64,
    /// Whether validation entries count as window history.
    pub include_validation_history: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            window: 3,
            cold_start_similarity: 0.80,
            error_model: ErrorModel::default(),
            seed: 0,
            include_validation_history: true,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.window == 0 {
            return Err(SimulateError::InvalidConfig("window must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.cold_start_similarity) {
            return Err(SimulateError::InvalidConfig(
                "cold_start_similarity must lie in [-1, 1]".into(),
            ));
        }
        self.error_model.validate()
    }
}

pub fn predict_error(max_sim: f64, m: &ErrorModel) -> f64 {
    (m.intercept + m.slope * max_sim).clamp(m.min_error, m.max_error)
}

/// Max similarity between `queue[position]` and up to `window` entries
/// before it; the cold-start value when there are none.
pub fn window_max_similarity(
    queue: &[usize],
    position: usize,
    sim: &SimilarityMatrix,
    cfg: &SimulationConfig,
) -> f64 {
    let lo = position.saturating_sub(cfg.window);
    max_over(queue[position], &queue[lo..position], sim, cfg.cold_start_similarity)
}

fn max_over(current: usize, history: &[usize], sim: &SimilarityMatrix, cold: f64) -> f64 {
    history
        .iter()
        .map(|&h| sim.get(current, h))
        .reduce(f64::max)
        .unwrap_or(cold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub algorithm: Algorithm,
    /// Predicted error per grader and queue position, in percent.
    pub errors: Vec<Vec<f64>>,
    pub mean_error: f64,
    /// Averaged over graders with at least one regular submission.
    pub validation_distance: f64,
    /// Graders whose queue holds only validations.
    pub idle_graders: Vec<usize>,
    pub config: SimulationConfig,
}

impl SimulationResult {
    /// Mean error of each grader's session.
    pub fn session_means(&self) -> Vec<f64> {
        self.errors.iter().filter(|e| !e.is_empty()).map(|e| stats::mean(e)).collect()
    }
}

fn queue_rows(assignment: &Assignment, sim: &SimilarityMatrix) -> Result<Vec<Vec<(usize, bool)>>, SimulateError> {
    assignment
        .graders
        .iter()
        .map(|g| {
            g.queue
                .iter()
                .map(|e| {
                    sim.index_of(&e.id)
                        .map(|i| (i, e.validation))
                        .ok_or_else(|| SimulateError::UnknownSubmissionInQueue(e.id.clone()))
                })
                .collect()
        })
        .collect()
}

pub fn simulate_session(
    assignment: &Assignment,
    sim: &SimilarityMatrix,
    cfg: &SimulationConfig,
) -> Result<SimulationResult, SimulateError> {
    cfg.validate()?;
    let rows = queue_rows(assignment, sim)?;
    let errors: Vec<Vec<f64>> = rows
        .iter()
        .map(|queue| {
            let mut history: Vec<usize> = Vec::with_capacity(queue.len());
            queue
                .iter()
                .map(|&(row, validation)| {
                    let lo = history.len().saturating_sub(cfg.window);
                    let s = max_over(row, &history[lo..], sim, cfg.cold_start_similarity);
                    if cfg.include_validation_history || !validation {
                        history.push(row);
                    }
                    predict_error(s, &cfg.error_model)
                })
                .collect()
        })
        .collect();
    let all: Vec<f64> = errors.iter().flatten().copied().collect();
    let mean_error = if all.is_empty() { 0.0 } else { stats::mean(&all) };
    let (validation_distance, idle_graders) = distance_parts(assignment, sim)?;
    Ok(SimulationResult {
        algorithm: assignment.algorithm,
        errors,
        mean_error,
        validation_distance,
        idle_graders,
        config: *cfg,
    })
}

/// Mean over graders of the mean cosine distance from each validation to
/// the nearest regular submission in the same queue. Graders without
/// validations are skipped.
pub fn validation_distance(assignment: &Assignment, sim: &SimilarityMatrix) -> Result<f64, SimulateError> {
    let (d, idle) = distance_parts(assignment, sim)?;
    match idle.first() {
        Some(&g) => Err(SimulateError::GraderHasNoRegularSubmissions(g)),
        None => Ok(d),
    }
}

/// Like [`validation_distance`] but averages only over graders that have
/// regular work, returning the ids of those that do not.
pub fn validation_distance_skipping_idle(
    assignment: &Assignment,
    sim: &SimilarityMatrix,
) -> Result<(f64, Vec<usize>), SimulateError> {
    distance_parts(assignment, sim)
}

fn distance_parts(assignment: &Assignment, sim: &SimilarityMatrix) -> Result<(f64, Vec<usize>), SimulateError> {
    let rows = queue_rows(assignment, sim)?;
    let mut per_grader = Vec::new();
    let mut idle = Vec::new();
    for (g, queue) in rows.iter().enumerate() {
        let regular: Vec<usize> = queue.iter().filter(|e| !e.1).map(|e| e.0).collect();
        let vals: Vec<usize> = queue.iter().filter(|e| e.1).map(|e| e.0).collect();
        if vals.is_empty() {
            continue;
        }
        if regular.is_empty() {
            idle.push(assignment.graders[g].grader);
            continue;
        }
        let d: Vec<f64> = vals
            .iter()
            .map(|&v| 1.0 - max_over(v, &regular, sim, f64::NAN))
            .collect();
        per_grader.push(stats::mean(&d));
    }
    let mean = if per_grader.is_empty() { 0.0 } else { stats::mean(&per_grader) };
    Ok((mean, idle))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    pub algorithms: Vec<Algorithm>,
    pub n_repetitions: usize,
    pub bootstrap_trials: usize,
    /// Template for every run; `algorithm` and `seed` are overridden.
    pub assignment: AssignmentConfig,
    pub simulation: SimulationConfig,
    pub seed: u64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            n_repetitions: 20,
            bootstrap_trials: 100_000,
            assignment: AssignmentConfig::default(),
            simulation: SimulationConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    /// Mean over every predicted per-position error of every session.
    pub mean_error_pct: f64,
    /// Mean over problems and repetitions.
    pub validation_distance: f64,
    /// Bootstrap test of per-run mean errors against the random baseline.
    pub p_vs_random: Option<f64>,
    pub n_reps: usize,
    /// Mean error at each queue position, over sessions long enough to reach it.
    pub per_position_error: Vec<f64>,
    /// Mean error of each (problem, repetition) run, in that order.
    pub run_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_problems: usize,
    pub config: ComparisonConfig,
    pub rows: Vec<AlgorithmSummary>,
}

impl ComparisonReport {
    pub fn row(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }

    /// Columns: algorithm, mean_error_pct, validation_distance, p_vs_random, n_reps.
    pub fn write_csv(&self, w: impl Write) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["algorithm", "mean_error_pct", "validation_distance", "p_vs_random", "n_reps"])?;
        for r in &self.rows {
            out.write_record([
                r.algorithm.name().to_owned(),
                r.mean_error_pct.to_string(),
                r.validation_distance.to_string(),
                r.p_vs_random.map(|p| p.to_string()).unwrap_or_default(),
                r.n_reps.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct RunOutcome {
    positions: Vec<Vec<f64>>,
    validation_distance: f64,
}

/// Runs every algorithm on every problem for `n_repetitions` seeds. Within a
/// repetition all algorithms share one assignment seed, so strategies that
/// partition at random see the same partition and validations.
pub fn compare_algorithms(problems: &[Vec<ProgramEmbedding>], cfg: &ComparisonConfig) -> crate::Result<ComparisonReport> {
    if cfg.n_repetitions == 0 {
        return Err(SimulateError::InvalidConfig("n_repetitions must be at least 1".into()).into());
    }
    if cfg.algorithms.is_empty() {
        return Err(SimulateError::InvalidConfig("no algorithms given".into()).into());
    }
    cfg.simulation.validate()?;
    let sims = problems
        .par_iter()
        .map(|p| embed::pairwise_similarity(p))
        .collect::<Result<Vec<_>, _>>()?;

    // The random baseline is always simulated and reported, first if not listed.
    let mut algorithms = cfg.algorithms.clone();
    if !algorithms.contains(&Algorithm::Random) {
        algorithms.insert(0, Algorithm::Random);
    }
    let algs = &algorithms;
    let tasks: Vec<(usize, usize, Algorithm)> = (0..problems.len())
        .flat_map(|p| (0..cfg.n_repetitions).flat_map(move |r| algs.iter().map(move |&a| (p, r, a))))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(p, r, algorithm)| -> crate::Result<RunOutcome> {
            let run_seed = seed::derive(seed::derive(cfg.seed, p as u64), r as u64);
            let acfg = AssignmentConfig {
                algorithm,
                seed: run_seed,
                ..cfg.assignment.clone()
            };
            let assignment = assign::build_assignment(&problems[p], &acfg)?;
            let result = simulate_session(&assignment, &sims[p], &cfg.simulation)?;
            Ok(RunOutcome {
                positions: result.errors,
                validation_distance: result.validation_distance,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;

    let mut grouped: HashMap<Algorithm, Vec<&RunOutcome>> = HashMap::new();
    for (&(_, _, a), o) in tasks.iter().zip(&outcomes) {
        grouped.entry(a).or_default().push(o);
    }
    let run_errors = |a: Algorithm| -> Vec<f64> {
        grouped[&a]
            .iter()
            .map(|o| stats::mean(&o.positions.concat()))
            .collect()
    };
    let baseline = run_errors(Algorithm::Random);
    let mut rows = Vec::with_capacity(algorithms.len());
    for (i, &a) in algorithms.iter().enumerate() {
        let runs = &grouped[&a];
        let all: Vec<f64> = runs.iter().flat_map(|o| o.positions.iter().flatten().copied()).collect();
        let longest = runs.iter().flat_map(|o| o.positions.iter().map(Vec::len)).max().unwrap_or(0);
        let per_position_error = (0..longest)
            .map(|pos| {
                let at: Vec<f64> = runs
                    .iter()
                    .flat_map(|o| o.positions.iter().filter_map(move |q| q.get(pos).copied()))
                    .collect();
                stats::mean(&at)
            })
            .collect();
        let runs_mean = run_errors(a);
        let p_vs_random = if a == Algorithm::Random {
            None
        } else {
            let trial_seed = seed::derive(cfg.seed ^ 0x5eed_b007, i as u64);
            Some(stats::bootstrap_mean_diff(&runs_mean, &baseline, cfg.bootstrap_trials, trial_seed)?.p_value)
        };
        rows.push(AlgorithmSummary {
            algorithm: a,
            mean_error_pct: if all.is_empty() { 0.0 } else { stats::mean(&all) },
            validation_distance: stats::mean(&runs.iter().map(|o| o.validation_distance).collect::<Vec<_>>()),
            p_vs_random,
            n_reps: cfg.n_repetitions,
            per_position_error,
            run_errors: runs_mean,
        });
    }
    Ok(ComparisonReport {
        n_problems: problems.len(),
        config: cfg.clone(),
        rows,
    })
}
