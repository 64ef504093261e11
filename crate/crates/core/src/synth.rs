//! Weighted-grammar generator of labeled synthetic programs, and the check
//! that embedding similarity tracks label similarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::corpus::{Submission, SubmissionSet};
use crate::embed::{self, ProgramEmbedding};
use crate::seed;
use crate::stats;

pub mod demo;

pub use demo::demo_grammar;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed grammar: {0}")]
    Malformed(String),
    #[error("start symbol {0:?} has no rules")]
    MissingStart(String),
    #[error("undefined nonterminal {0:?}")]
    UndefinedNonterminal(String),
    #[error("non-positive weight in rule {nonterminal:?} production {index}")]
    NonPositiveWeight { nonterminal: String, index: usize },
    #[error("nonterminal {0:?} has no productions")]
    NoProductions(String),
    #[error("production {index} of {nonterminal:?} has neither body nor labels")]
    EmptyProduction { nonterminal: String, index: usize },
    #[error("derivation exceeded max depth {0}")]
    DepthExceeded(usize),
    #[error("derivation produced empty program text")]
    EmptyProgram,
    #[error("need at least two programs, got {0}")]
    TooFewPrograms(usize),
    #[error("{programs} programs but {embeddings} embeddings")]
    LengthMismatch { programs: usize, embeddings: usize },
}

impl SynthError {
    pub fn is_io(&self) -> bool {
        matches!(self, SynthError::MissingFile(_) | SynthError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symbol {
    Terminal { t: String },
    Nonterminal { nt: String },
}

impl Symbol {
    pub fn t(text: impl Into<String>) -> Self {
        Symbol::Terminal { t: text.into() }
    }

    pub fn nt(name: impl Into<String>) -> Self {
        Symbol::Nonterminal { nt: name.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub weight: f64,
    pub body: Vec<Symbol>,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub start: String,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    pub rules: BTreeMap<String, Vec<Production>>,
}

fn default_max_depth() -> usize {
    64
}

impl Grammar {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !self.rules.contains_key(&self.start) {
            return Err(SynthError::MissingStart(self.start.clone()));
        }
        for (name, prods) in &self.rules {
            if prods.is_empty() {
                return Err(SynthError::NoProductions(name.clone()));
            }
            for (index, p) in prods.iter().enumerate() {
                if !(p.weight > 0.0 && p.weight.is_finite()) {
                    return Err(SynthError::NonPositiveWeight {
                        nonterminal: name.clone(),
                        index,
                    });
                }
                if p.body.is_empty() && p.labels.is_empty() {
                    return Err(SynthError::EmptyProduction {
                        nonterminal: name.clone(),
                        index,
                    });
                }
                for s in &p.body {
                    if let Symbol::Nonterminal { nt } = s {
                        if !self.rules.contains_key(nt) {
                            return Err(SynthError::UndefinedNonterminal(nt.clone()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Every label that any production can emit.
    pub fn all_labels(&self) -> BTreeSet<String> {
        self.rules
            .values()
            .flatten()
            .flat_map(|p| p.labels.iter().cloned())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grammar serializes")
    }
}

pub fn parse_grammar(text: &str) -> Result<Grammar, SynthError> {
    let g: Grammar =
        serde_json::from_str(text).map_err(|e| SynthError::Malformed(e.to_string()))?;
    g.validate()?;
    Ok(g)
}

pub fn load_grammar(path: impl AsRef<Path>) -> Result<Grammar, SynthError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            SynthError::MissingFile(path.to_path_buf())
        } else {
            SynthError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    parse_grammar(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledProgram {
    pub source_text: String,
    pub labels: BTreeSet<String>,
}

/// Precomputed choice distributions for repeated sampling.
pub struct Sampler<'g> {
    grammar: &'g Grammar,
    choices: HashMap<&'g str, WeightedIndex<f64>>,
}

impl<'g> Sampler<'g> {
    pub fn new(grammar: &'g Grammar) -> Result<Self, SynthError> {
        grammar.validate()?;
        let choices = grammar
            .rules
            .iter()
            .map(|(name, prods)| {
                let w = WeightedIndex::new(prods.iter().map(|p| p.weight))
                    .expect("validated weights");
                (name.as_str(), w)
            })
            .collect();
        Ok(Self { grammar, choices })
    }

    pub fn sample(&self, seed: u64) -> Result<LabeledProgram, SynthError> {
        let mut rng = seed::rng(seed);
        let mut text = String::new();
        let mut labels = BTreeSet::new();
        self.expand(&self.grammar.start, 0, &mut rng, &mut text, &mut labels)?;
        if text.is_empty() {
            return Err(SynthError::EmptyProgram);
        }
        Ok(LabeledProgram {
            source_text: text,
            labels,
        })
    }

    fn expand(
        &self,
        name: &str,
        depth: usize,
        rng: &mut seed::Rng,
        text: &mut String,
        labels: &mut BTreeSet<String>,
    ) -> Result<(), SynthError> {
        if depth >= self.grammar.max_depth {
            return Err(SynthError::DepthExceeded(self.grammar.max_depth));
        }
        let prods = &self.grammar.rules[name];
        let p = &prods[self.choices[name].sample(rng)];
        labels.extend(p.labels.iter().cloned());
        for s in &p.body {
            match s {
                Symbol::Terminal { t } => text.push_str(t),
                Symbol::Nonterminal { nt } => self.expand(nt, depth + 1, rng, text, labels)?,
            }
        }
        Ok(())
    }
}

/// Top-down weighted expansion from the start symbol.
pub fn sample_program(g: &Grammar, seed: u64) -> Result<LabeledProgram, SynthError> {
    Sampler::new(g)?.sample(seed)
}

/// `n` programs; program `i` uses the seed derived from `(seed, i)`.
pub fn sample_corpus(g: &Grammar, n: usize, seed: u64) -> Result<Vec<LabeledProgram>, SynthError> {
    let sampler = Sampler::new(g)?;
    (0..n).map(|i| sampler.sample(seed::derive(seed, i as u64))).collect()
}

/// Id of the `i`-th generated submission for a problem.
pub fn submission_id(problem_id: &str, i: usize) -> String {
    format!("{problem_id}-{i:05}")
}

pub fn to_submissions(problem_id: &str, programs: &[LabeledProgram]) -> SubmissionSet {
    let subs = programs
        .iter()
        .enumerate()
        .map(|(i, p)| Submission {
            id: submission_id(problem_id, i),
            problem_id: problem_id.to_owned(),
            student_id: None,
            source_text: p.source_text.clone(),
        })
        .collect();
    SubmissionSet::new(subs).expect("generated ids are unique")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DerivationCount {
    Exact(u64),
    /// More than `i64::MAX` derivations.
    Overflow,
}

/// Number of distinct derivations from the start symbol (not distinct texts).
pub fn count_distinct(g: &Grammar) -> Result<DerivationCount, SynthError> {
    g.validate()?;
    const LIMIT: u128 = i64::MAX as u128;
    // Post-order DFS with cycle detection; `None` marks "in progress".
    fn visit<'g>(
        g: &'g Grammar,
        name: &'g str,
        memo: &mut HashMap<&'g str, Option<(u128, usize)>>,
    ) -> Result<(u128, usize), SynthError> {
        match memo.get(name) {
            Some(Some(v)) => return Ok(*v),
            Some(None) => return Err(SynthError::DepthExceeded(g.max_depth)),
            None => {}
        }
        memo.insert(name, None);
        let mut total: u128 = 0;
        let mut height = 0;
        for p in &g.rules[name] {
            let mut product: u128 = 1;
            for s in &p.body {
                if let Symbol::Nonterminal { nt } = s {
                    let (c, h) = visit(g, nt, memo)?;
                    product = product.saturating_mul(c).min(LIMIT + 1);
                    height = height.max(h);
                }
            }
            total = total.saturating_add(product).min(LIMIT + 1);
        }
        let v = (total, height + 1);
        memo.insert(name, Some(v));
        Ok(v)
    }
    let mut memo = HashMap::new();
    let (count, height) = visit(g, &g.start, &mut memo)?;
    if height > g.max_depth {
        return Err(SynthError::DepthExceeded(g.max_depth));
    }
    Ok(if count > LIMIT {
        DerivationCount::Overflow
    } else {
        DerivationCount::Exact(count as u64)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticPair {
    pub a: usize,
    pub b: usize,
    pub cosine: f64,
    pub jaccard: f64,
}

/// Jaccard-on-cosine regression over program pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub n_pairs: usize,
    /// Whether every pair was used rather than a sample.
    pub exhaustive: bool,
    pub flags: Vec<String>,
    #[serde(skip)]
    pub pairs: Vec<SemanticPair>,
}

pub const FLAG_ZERO_VARIANCE_X: &str = "ZeroVarianceX";
pub const FLAG_ZERO_VARIANCE_Y: &str = "ZeroVarianceY";

/// Maps a linear index in `0..n(n-1)/2` to the pair `(i, j)` with `i < j`.
fn unrank_pair(k: usize, n: usize) -> (usize, usize) {
    let nf = n as f64;
    let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * k as f64;
    let mut i = ((2.0 * nf - 1.0 - disc.max(0.0).sqrt()) / 2.0).floor() as usize;
    let start = |i: usize| i * (2 * n - i - 1) / 2;
    while i > 0 && start(i) > k {
        i -= 1;
    }
    while start(i + 1) <= k {
        i += 1;
    }
    (i, i + 1 + k - start(i))
}

pub fn evaluate_semantics(
    programs: &[LabeledProgram],
    embs: &[ProgramEmbedding],
    n_pairs: usize,
    seed: u64,
) -> Result<SemanticFit, crate::Error> {
    let n = programs.len();
    if n != embs.len() {
        return Err(SynthError::LengthMismatch {
            programs: n,
            embeddings: embs.len(),
        }
        .into());
    }
    if n < 2 {
        return Err(SynthError::TooFewPrograms(n).into());
    }
    let total = n * (n - 1) / 2;
    let exhaustive = n_pairs >= total;
    let indices: Vec<usize> = if exhaustive {
        (0..total).collect()
    } else {
        let mut rng = seed::rng(seed);
        let mut idx = rand::seq::index::sample(&mut rng, total, n_pairs).into_vec();
        idx.sort_unstable();
        idx
    };
    let mut pairs = Vec::with_capacity(indices.len());
    for k in indices {
        let (a, b) = unrank_pair(k, n);
        pairs.push(SemanticPair {
            a,
            b,
            cosine: embed::cosine_similarity(&embs[a].vector, &embs[b].vector)?,
            jaccard: embed::jaccard_similarity(&programs[a].labels, &programs[b].labels),
        });
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.cosine).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.jaccard).collect();
    let mut flags = Vec::new();
    let (slope, intercept, r2) = match stats::ols_fit(&xs, &ys) {
        Ok(f) => {
            if f.r2.is_none() {
                flags.push(FLAG_ZERO_VARIANCE_Y.to_owned());
            }
            (Some(f.slope), Some(f.intercept), f.r2)
        }
        Err(stats::StatsError::ConstantX | stats::StatsError::TooFewPoints(_)) => {
            flags.push(FLAG_ZERO_VARIANCE_X.to_owned());
            (None, None, None)
        }
        Err(e) => return Err(e.into()),
    };
    Ok(SemanticFit {
        slope,
        intercept,
        r2,
        n_pairs: pairs.len(),
        exhaustive,
        flags,
        pairs,
    })
}
