//! Submission and grading-log data model, with JSON Lines ingestion.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate submission id {0:?}")]
    DuplicateId(String),
    #[error("mixed problem ids: expected {expected:?}, found {found:?} at line {line}")]
    MixedProblemIds {
        expected: String,
        found: String,
        line: usize,
    },
    #[error("score out of range at line {line}: {message}")]
    ScoreOutOfRange { line: usize, message: String },
    #[error("validation entry without true_score at line {0}")]
    ValidationWithoutTrueScore(usize),
}

impl CorpusError {
    pub fn is_io(&self) -> bool {
        matches!(self, CorpusError::MissingFile(_) | CorpusError::Io { .. })
    }
}

/// One student's answer to one problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub id: String,
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_id: Option<String>,
    pub source_text: String,
}

/// One grader scoring one submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingLogEntry {
    pub grader_id: String,
    pub submission_id: String,
    #[serde(rename = "timestamp_ms")]
    pub timestamp: i64,
    pub assigned_score: f64,
    pub max_score: f64,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub is_validation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_score: Option<f64>,
}

impl GradingLogEntry {
    /// Absolute deviation from the expert score as a percentage of `max_score`.
    pub fn percent_error(&self) -> Option<f64> {
        self.true_score
            .map(|t| (self.assigned_score - t).abs() / self.max_score * 100.0)
    }

    fn check(&self, line: usize) -> Result<(), CorpusError> {
        let out_of_range = |message: String| CorpusError::ScoreOutOfRange { line, message };
        if !(self.max_score > 0.0) || !self.max_score.is_finite() {
            return Err(out_of_range(format!("max_score {} must be > 0", self.max_score)));
        }
        if !(0.0..=self.max_score).contains(&self.assigned_score) {
            return Err(out_of_range(format!(
                "assigned_score {} not in [0, {}]",
                self.assigned_score, self.max_score
            )));
        }
        if let Some(t) = self.true_score {
            if !(0.0..=self.max_score).contains(&t) {
                return Err(out_of_range(format!(
                    "true_score {} not in [0, {}]",
                    t, self.max_score
                )));
            }
        }
        if let Some(d) = self.duration_s {
            if !(d >= 0.0) {
                return Err(CorpusError::MalformedRecord {
                    line,
                    message: format!("duration_s {d} is negative"),
                });
            }
        }
        if self.is_validation && self.true_score.is_none() {
            return Err(CorpusError::ValidationWithoutTrueScore(line));
        }
        Ok(())
    }
}

/// All submissions for a single problem, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubmissionSet {
    pub problem_id: String,
    pub submissions: Vec<Submission>,
}

impl SubmissionSet {
    /// Builds a set, enforcing id uniqueness and a single problem id.
    pub fn new(submissions: Vec<Submission>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        let problem_id = submissions
            .first()
            .map(|s| s.problem_id.clone())
            .unwrap_or_default();
        for (i, s) in submissions.iter().enumerate() {
            if s.problem_id != problem_id {
                return Err(CorpusError::MixedProblemIds {
                    expected: problem_id,
                    found: s.problem_id.clone(),
                    line: i + 1,
                });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            problem_id,
            submissions,
        })
    }

    pub fn len(&self) -> usize {
        self.submissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submissions.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.submissions.iter().map(|s| s.id.as_str())
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            Err(CorpusError::MissingFile(path.to_path_buf()))
        }
        Err(source) => Err(CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Yields `(line_number, record)` for each non-blank line of a JSONL file.
fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

/// Loads a submissions JSONL file. Blank lines are ignored.
pub fn load_submissions(path: impl AsRef<Path>) -> Result<SubmissionSet, CorpusError> {
    let records: Vec<(usize, Submission)> = read_jsonl(path.as_ref())?;
    for (line, s) in &records {
        if s.source_text.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: *line,
                message: format!("submission {:?} has empty source_text", s.id),
            });
        }
    }
    let mut set = SubmissionSet::default();
    let mut seen = HashSet::new();
    for (line, s) in records {
        if set.submissions.is_empty() {
            set.problem_id = s.problem_id.clone();
        } else if s.problem_id != set.problem_id {
            return Err(CorpusError::MixedProblemIds {
                expected: set.problem_id,
                found: s.problem_id,
                line,
            });
        }
        if !seen.insert(s.id.clone()) {
            return Err(CorpusError::DuplicateId(s.id));
        }
        set.submissions.push(s);
    }
    Ok(set)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, records: &[T]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_submissions(path: impl AsRef<Path>, set: &SubmissionSet) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_jsonl(io::BufWriter::new(file), &set.submissions).map_err(io_err)
}

/// Loads grading logs, sorted by `(grader_id, timestamp)` with input order kept on ties.
pub fn load_grading_logs(path: impl AsRef<Path>) -> Result<Vec<GradingLogEntry>, CorpusError> {
    let records: Vec<(usize, GradingLogEntry)> = read_jsonl(path.as_ref())?;
    for (line, e) in &records {
        e.check(*line)?;
    }
    let mut logs: Vec<GradingLogEntry> = records.into_iter().map(|(_, e)| e).collect();
    sort_logs(&mut logs);
    Ok(logs)
}

/// Stable sort by `(grader_id, timestamp)`.
pub fn sort_logs(logs: &mut [GradingLogEntry]) {
    logs.sort_by(|a, b| {
        a.grader_id
            .cmp(&b.grader_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusReport {
    /// Submission ids referenced by logs but absent from the set, first-seen order.
    pub dangling: Vec<String>,
    /// Submissions that no log entry references, in set order.
    pub unlogged: Vec<String>,
    pub entries_per_grader: BTreeMap<String, usize>,
}

pub fn validate_corpus(subs: &SubmissionSet, logs: &[GradingLogEntry]) -> CorpusReport {
    let known: HashSet<&str> = subs.ids().collect();
    let mut referenced = HashSet::new();
    let mut report = CorpusReport::default();
    for e in logs {
        *report
            .entries_per_grader
            .entry(e.grader_id.clone())
            .or_default() += 1;
        if !known.contains(e.submission_id.as_str()) {
            if !report.dangling.contains(&e.submission_id) {
                report.dangling.push(e.submission_id.clone());
            }
        } else {
            referenced.insert(e.submission_id.as_str());
        }
    }
    report.unlogged = subs
        .ids()
        .filter(|id| !referenced.contains(id))
        .map(str::to_owned)
        .collect();
    report
}
