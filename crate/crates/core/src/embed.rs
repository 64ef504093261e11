//! Skip-gram token embeddings with negative sampling, program embeddings and
//! the two similarity measures used throughout: cosine over embeddings and
//! Jaccard over feedback-label sets.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::distr::{weighted::WeightedIndex, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codeprep::{self, PrepConfig, TokenStream, Vocab};
use crate::corpus::SubmissionSet;
use crate::seed;

const MAGIC: &[u8; 4] = b"SGEM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("no in-vocabulary tokens remain after filtering")]
    EmptyCorpusAfterFilter,
    #[error("submission {0:?} has no in-vocabulary tokens")]
    NoKnownTokens(String),
    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid embedding config: {0}")]
    InvalidConfig(String),
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad embedding file: {0}")]
    BadFormat(String),
    #[error("malformed program embedding at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

impl EmbedError {
    pub fn is_io(&self) -> bool {
        matches!(self, EmbedError::MissingFile(_) | EmbedError::Io { .. })
    }
}

/// Skip-gram hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub dim: usize,
    /// Context radius on each side of the center token.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            window: 5,
            negatives: 5,
            epochs: 10,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.to_owned()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.negatives == 0 {
            return bad("negatives must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return bad("learning_rate must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Learned per-token vectors, row-major `|vocab| x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    dim: usize,
    vectors: Vec<f32>,
    vocab: Vocab,
}

impl TokenEmbeddings {
    pub fn new(vocab: Vocab, dim: usize, vectors: Vec<f32>) -> Result<Self, EmbedError> {
        if dim == 0 || vectors.len() != vocab.len() * dim {
            return Err(EmbedError::BadFormat(format!(
                "{} values for {} tokens of dim {dim}",
                vectors.len(),
                vocab.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::BadFormat("non-finite value".into()));
        }
        Ok(Self { dim, vectors, vocab })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vocab.index_of(token).map(|i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vectors
    }

    /// Binary layout: `"SGEM"`, version, n, dim (u32 LE), `n*dim` f32 LE
    /// row-major, then each token as u32 LE byte length + UTF-8 bytes.
    pub fn write_binary(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.vectors {
            w.write_all(&v.to_le_bytes())?;
        }
        for t in self.vocab.tokens() {
            w.write_all(&(t.len() as u32).to_le_bytes())?;
            w.write_all(t.as_bytes())?;
        }
        w.flush()
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self, EmbedError> {
        let bad = |m: String| EmbedError::BadFormat(m);
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| bad(e.to_string()))?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], EmbedError> {
            let s = buf
                .get(pos..pos + n)
                .ok_or_else(|| bad("truncated file".into()))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(bad("missing SGEM magic".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u32_at(take(4)?) as usize;
        let dim = u32_at(take(4)?) as usize;
        let raw = take(n * dim * 4)?;
        let vectors = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u32_at(take(4)?) as usize;
            let t = std::str::from_utf8(take(len)?)
                .map_err(|e| bad(format!("token is not UTF-8: {e}")))?;
            tokens.push(t.to_owned());
        }
        if pos != buf.len() {
            return Err(bad("trailing bytes".into()));
        }
        Self::new(Vocab::from_ordered_tokens(tokens), dim, vectors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| io_err(path, source))?;
        self.write_binary(BufWriter::new(file))
            .map_err(|source| io_err(path, source))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        Self::read_binary(BufReader::new(open(path)?))
    }

    /// CSV with header `token,v0,...,v{dim-1}`.
    pub fn write_csv(&self, w: impl Write) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["token".to_owned()];
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        out.write_record(&header)?;
        for (i, t) in self.vocab.tokens().iter().enumerate() {
            let mut rec = vec![t.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn io_err(path: &Path, source: io::Error) -> EmbedError {
    EmbedError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<File, EmbedError> {
    File::open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            EmbedError::MissingFile(path.to_path_buf())
        } else {
            io_err(path, e)
        }
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling loss of one (center, context) pair:
/// `-ln s(u_o . v) - sum_k ln s(-u_k . v)`.
pub fn sgns_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let mut loss = -sigmoid(dot(context, center)).ln();
    for n in negatives {
        loss -= sigmoid(-dot(n, center)).ln();
    }
    loss
}

/// Analytic gradients of [`sgns_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradients {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn sgns_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGradients {
    let g_pos = sigmoid(dot(context, center)) - 1.0;
    let mut g_center: Vec<f64> = context.iter().map(|u| g_pos * u).collect();
    let g_context = center.iter().map(|v| g_pos * v).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let g = sigmoid(dot(n, center));
        for (gc, u) in g_center.iter_mut().zip(n.iter()) {
            *gc += g * u;
        }
        g_negs.push(center.iter().map(|v| g * v).collect());
    }
    SgnsGradients {
        center: g_center,
        context: g_context,
        negatives: g_negs,
    }
}

/// Dense parameters of a skip-gram model during training.
#[derive(Debug, Clone)]
pub struct SkipGram {
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl SkipGram {
    pub fn init(n: usize, dim: usize, rng: &mut impl rand::Rng) -> Self {
        let scale = 0.5 / dim as f64;
        let input = (0..n * dim)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        Self {
            dim,
            input,
            output: vec![0.0; n * dim],
        }
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    /// One SGD step on the pair loss. Negatives equal to `context` are skipped.
    pub fn step(&mut self, center: usize, context: usize, negatives: &[usize], lr: f64, scratch: &mut [f64]) {
        let d = self.dim;
        scratch.fill(0.0);
        let c_off = center * d;
        let targets = std::iter::once((context, 1.0))
            .chain(negatives.iter().filter(|&&n| n != context).map(|&n| (n, 0.0)));
        for (target, label) in targets {
            let t_off = target * d;
            let f = sigmoid(dot(&self.input[c_off..c_off + d], &self.output[t_off..t_off + d]));
            let g = (label - f) * lr;
            for k in 0..d {
                scratch[k] += g * self.output[t_off + k];
                self.output[t_off + k] += g * self.input[c_off + k];
            }
        }
        for k in 0..d {
            self.input[c_off + k] += scratch[k];
        }
    }
}

/// Trains skip-gram embeddings over the in-vocabulary tokens of `streams`.
/// Single-threaded and bit-reproducible for a given `cfg.seed`.
pub fn train_embeddings(
    streams: &[TokenStream],
    vocab: &Vocab,
    cfg: &EmbedConfig,
) -> Result<TokenEmbeddings, EmbedError> {
    cfg.validate()?;
    let docs: Vec<Vec<usize>> = streams
        .iter()
        .map(|s| vocab.encode(s))
        .filter(|d| !d.is_empty())
        .collect();
    let total: usize = docs.iter().map(Vec::len).sum();
    if total == 0 || vocab.is_empty() {
        return Err(EmbedError::EmptyCorpusAfterFilter);
    }
    let mut rng = seed::rng(cfg.seed);
    let weights: Vec<f64> = match vocab.counts() {
        Some(c) => c.iter().map(|&c| (c as f64).powf(0.75)).collect(),
        None => vec![1.0; vocab.len()],
    };
    let noise = WeightedIndex::new(&weights)
        .map_err(|e| EmbedError::InvalidConfig(format!("noise distribution: {e}")))?;

    let mut model = SkipGram::init(vocab.len(), cfg.dim, &mut rng);
    let mut scratch = vec![0.0; cfg.dim];
    let mut negs = vec![0usize; cfg.negatives];
    let steps = (cfg.epochs * total) as f64;
    let mut done = 0usize;
    for _ in 0..cfg.epochs {
        for doc in &docs {
            for (pos, &center) in doc.iter().enumerate() {
                let lr = cfg.learning_rate * (1.0 - done as f64 / steps).max(1e-4);
                done += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(doc.len());
                for (ctx_pos, &context) in doc.iter().enumerate().take(hi).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    for n in negs.iter_mut() {
                        *n = noise.sample(&mut rng);
                    }
                    model.step(center, context, &negs, lr, &mut scratch);
                }
            }
        }
    }
    let vectors = model.input.iter().map(|&v| v as f32).collect();
    TokenEmbeddings::new(vocab.clone(), cfg.dim, vectors)
}

/// Mean token vector of one program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramEmbedding {
    pub submission_id: String,
    pub vector: Vec<f64>,
}

/// Averages the vectors of the stream's in-vocabulary tokens.
pub fn embed_program(stream: &TokenStream, emb: &TokenEmbeddings) -> Result<ProgramEmbedding, EmbedError> {
    let mut sum = vec![0.0f64; emb.dim()];
    let mut n = 0usize;
    for t in &stream.tokens {
        if let Some(row) = emb.get(t) {
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += v as f64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(EmbedError::NoKnownTokens(stream.submission_id.clone()));
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    if sum.iter().all(|&s| s == 0.0) {
        return Err(EmbedError::ZeroVector);
    }
    Ok(ProgramEmbedding {
        submission_id: stream.submission_id.clone(),
        vector: sum,
    })
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a.b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let (na2, nb2) = (dot(a, a), dot(b, b));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    // A single square root keeps cosine(a, a) exactly 1.
    Ok((dot(a, b) / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

/// `|A n B| / |A u B|`; two empty sets count as identical.
pub fn jaccard_similarity<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Symmetric cosine-similarity matrix over a set of programs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn by_id(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.get(self.index_of(a)?, self.index_of(b)?))
    }
}

pub fn pairwise_similarity(embs: &[ProgramEmbedding]) -> Result<SimilarityMatrix, EmbedError> {
    let n = embs.len();
    let dim = embs.first().map_or(0, |e| e.vector.len());
    for e in embs {
        if e.vector.len() != dim {
            return Err(EmbedError::DimensionMismatch(dim, e.vector.len()));
        }
        if norm(&e.vector) == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| cosine_similarity(&embs[i].vector, &embs[j].vector).unwrap())
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        values[i * n + i] = 1.0;
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    let ids: Vec<String> = embs.iter().map(|e| e.submission_id.clone()).collect();
    let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(SimilarityMatrix { ids, index, values })
}

pub fn write_program_embeddings(path: impl AsRef<Path>, embs: &[ProgramEmbedding]) -> Result<(), EmbedError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    crate::corpus::write_jsonl(BufWriter::new(file), embs).map_err(|e| io_err(path, e))
}

pub fn load_program_embeddings(path: impl AsRef<Path>) -> Result<Vec<ProgramEmbedding>, EmbedError> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ProgramEmbedding =
            serde_json::from_str(&line).map_err(|e| EmbedError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(e);
    }
    Ok(out)
}

/// Preprocess, build the vocabulary, train, and embed every submission.
pub fn embed_submissions(
    set: &SubmissionSet,
    prep: &PrepConfig,
    min_count: usize,
    cfg: &EmbedConfig,
) -> crate::Result<(TokenEmbeddings, Vec<ProgramEmbedding>)> {
    let streams = set
        .submissions
        .iter()
        .map(|s| codeprep::prepare_submission(s, prep))
        .collect::<Result<Vec<_>, _>>()?;
    let vocab = codeprep::build_vocab(&streams, min_count)?;
    let emb = train_embeddings(&streams, &vocab, cfg)?;
    let programs = streams
        .iter()
        .map(|s| embed_program(s, &emb))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((emb, programs))
}
