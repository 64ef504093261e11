//! Partitioning submissions among graders and ordering each grader's queue.
//!
//! Six strategies are provided, see [`Algorithm`]. All of them share the
//! same validation handling: validations are drawn once per seed and then
//! inserted at uniformly random positions into every grader's queue.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embed::{self, ProgramEmbedding, SimilarityMatrix};
use crate::linalg;
use crate::seed::{self, Rng};

const STREAM_VALIDATION: u64 = 1;
const STREAM_PARTITION: u64 = 2;
const STREAM_KMEANS: u64 = 3;
const STREAM_ORDER: u64 = 4;
const STREAM_INSERT: u64 = 5;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AssignError {
    #[error("cannot select {n} validations from {available} submissions")]
    NTooLarge { n: usize, available: usize },
    #[error("{n} submissions cannot be split among {k} graders")]
    TooFewSubmissions { n: usize, k: usize },
    #[error("k = {k} exceeds the number of points {n}")]
    KExceedsN { k: usize, n: usize },
    #[error("start {0:?} is not in the id set")]
    StartNotInSet(String),
    #[error("no embedding for submission {0:?}")]
    MissingEmbedding(String),
    #[error("duplicate submission id {0:?}")]
    DuplicateId(String),
    #[error("zero-norm embedding for submission {0:?}")]
    ZeroVector(String),
    #[error("PCA needs at least 3 points of dimension 2, got {n} of dimension {dim}")]
    PcaTooSmall { n: usize, dim: usize },
    #[error("invalid assignment config: {0}")]
    InvalidConfig(String),
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("malformed assignment: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Random,
    Cluster,
    ClusterPath,
    Snake,
    PetalLoop,
    PetalPath,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Random,
        Algorithm::Cluster,
        Algorithm::ClusterPath,
        Algorithm::Snake,
        Algorithm::PetalLoop,
        Algorithm::PetalPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::Cluster => "cluster",
            Algorithm::ClusterPath => "cluster_path",
            Algorithm::Snake => "snake",
            Algorithm::PetalLoop => "petal_loop",
            Algorithm::PetalPath => "petal_path",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = AssignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| AssignError::UnknownAlgorithm(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignmentConfig {
    pub n_graders: usize,
    pub algorithm: Algorithm,
    pub n_validations: usize,
    pub seed: u64,
    pub mcmc_iterations: usize,
    pub mcmc_initial_temp: f64,
    pub mcmc_cooling: f64,
    pub kmeans_max_iters: usize,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            n_graders: 10,
            algorithm: Algorithm::Random,
            n_validations: 5,
            seed: 0,
            mcmc_iterations: 50_000,
            mcmc_initial_temp: 1.0,
            mcmc_cooling: 0.9995,
            kmeans_max_iters: 100,
        }
    }
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<(), AssignError> {
        let bad = |m: &str| Err(AssignError::InvalidConfig(m.to_owned()));
        if self.n_graders == 0 {
            return bad("n_graders must be at least 1");
        }
        if !(self.mcmc_cooling > 0.0 && self.mcmc_cooling < 1.0) {
            return bad("mcmc_cooling must lie in (0, 1)");
        }
        if !(self.mcmc_initial_temp > 0.0) {
            return bad("mcmc_initial_temp must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: String,
    pub validation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraderQueue {
    pub grader: usize,
    pub queue: Vec<QueueEntry>,
}

impl GraderQueue {
    pub fn regular(&self) -> impl Iterator<Item = &str> {
        self.queue.iter().filter(|e| !e.validation).map(|e| e.id.as_str())
    }

    pub fn validations(&self) -> impl Iterator<Item = &str> {
        self.queue.iter().filter(|e| e.validation).map(|e| e.id.as_str())
    }
}

/// Per-grader ordered queues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub graders: Vec<GraderQueue>,
}

impl Assignment {
    /// Regular (non-validation) submissions per grader.
    pub fn loads(&self) -> Vec<usize> {
        self.graders.iter().map(|g| g.regular().count()).collect()
    }

    /// Checks exactly-once coverage of `regular` and that each validation
    /// appears exactly once in every queue.
    pub fn check_invariants(&self, regular: &[String], validations: &[String]) -> Result<(), String> {
        let mut seen = HashSet::new();
        for g in &self.graders {
            for id in g.regular() {
                if !seen.insert(id) {
                    return Err(format!("regular submission {id} assigned twice"));
                }
            }
            let mut vals: Vec<&str> = g.validations().collect();
            vals.sort_unstable();
            let mut expected: Vec<&str> = validations.iter().map(String::as_str).collect();
            expected.sort_unstable();
            if vals != expected {
                return Err(format!(
                    "grader {} has validations {vals:?}, expected {expected:?}",
                    g.grader
                ));
            }
        }
        let want: HashSet<&str> = regular.iter().map(String::as_str).collect();
        if seen != want {
            return Err(format!(
                "coverage mismatch: {} assigned vs {} expected",
                seen.len(),
                want.len()
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AssignError> {
        serde_json::from_str(text).map_err(|e| AssignError::Malformed(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| crate::corpus::CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_json(&text)?)
    }
}

/// Uniformly samples `n` validation ids. Both lists keep input order.
pub fn select_validations(
    ids: &[String],
    n: usize,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), AssignError> {
    if n > 0 && n >= ids.len() {
        return Err(AssignError::NTooLarge {
            n,
            available: ids.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut picked = rand::seq::index::sample(&mut rng, ids.len(), n).into_vec();
    picked.sort_unstable();
    let chosen: HashSet<usize> = picked.iter().copied().collect();
    let validations = picked.iter().map(|&i| ids[i].clone()).collect();
    let rest = ids
        .iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .map(|(_, id)| id.clone())
        .collect();
    Ok((validations, rest))
}

/// Uniform random partition into `k` subsets whose sizes differ by at most one.
pub fn assign_random(ids: &[String], k: usize, rng: &mut Rng) -> Result<Vec<Vec<String>>, AssignError> {
    if k == 0 || ids.len() < k {
        return Err(AssignError::TooFewSubmissions { n: ids.len(), k });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(rng);
    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut it = shuffled.into_iter();
    for g in 0..k {
        let size = base + usize::from(g < extra);
        out.push(it.by_ref().take(size).collect());
    }
    Ok(out)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = embed::norm(v);
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    /// Unit-norm centroids.
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Mean cosine of points to their centroid, recorded after every iteration.
    pub objective: Vec<f64>,
}

/// Spherical k-means. Initial centroids are one seeded random point followed
/// by farthest-first picks (lowest best cosine to the chosen set).
pub fn kmeans_cosine(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeans, AssignError> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(AssignError::KExceedsN { k, n });
    }
    let xs: Vec<Vec<f64>> = vectors.iter().map(|v| normalized(v)).collect();
    let mut rng = seed::rng(seed);
    let first = rng.random_range(0..n);
    let mut centroids = vec![xs[first].clone()];
    let mut closest: Vec<f64> = xs.iter().map(|x| dot(x, &xs[first])).collect();
    let mut taken = vec![false; n];
    taken[first] = true;
    while centroids.len() < k {
        let next = (0..n)
            .filter(|&i| !taken[i])
            .min_by(|&a, &b| closest[a].total_cmp(&closest[b]).then(a.cmp(&b)))
            .unwrap();
        taken[next] = true;
        for (c, x) in closest.iter_mut().zip(&xs) {
            *c = c.max(dot(x, &xs[next]));
        }
        centroids.push(xs[next].clone());
    }

    let mut labels = vec![usize::MAX; n];
    let mut objective = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let new_labels: Vec<usize> = xs
            .iter()
            .map(|x| {
                let mut best = 0;
                let mut best_sim = f64::NEG_INFINITY;
                for (c, centroid) in centroids.iter().enumerate() {
                    let s = dot(x, centroid);
                    if s > best_sim {
                        best_sim = s;
                        best = c;
                    }
                }
                best
            })
            .collect();
        let mut next_labels = new_labels;
        reseed_empty(&xs, &centroids, &mut next_labels, k);
        centroids = (0..k)
            .map(|c| {
                let mut sum = vec![0.0; xs[0].len()];
                for (x, _) in xs.iter().zip(&next_labels).filter(|(_, &l)| l == c) {
                    for (s, v) in sum.iter_mut().zip(x) {
                        *s += v;
                    }
                }
                if embed::norm(&sum) > 0.0 {
                    normalized(&sum)
                } else {
                    centroids[c].clone()
                }
            })
            .collect();
        let obj = xs
            .iter()
            .zip(&next_labels)
            .map(|(x, &l)| dot(x, &centroids[l]))
            .sum::<f64>()
            / n as f64;
        objective.push(obj);
        let converged = next_labels == labels;
        labels = next_labels;
        if converged {
            break;
        }
    }
    Ok(KMeans {
        labels,
        centroids,
        iterations,
        objective,
    })
}

/// Moves the worst-fitting point of a multi-member cluster into each empty cluster.
fn reseed_empty(xs: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let worst = (0..xs.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .min_by(|&a, &b| {
                dot(&xs[a], &centroids[labels[a]])
                    .total_cmp(&dot(&xs[b], &centroids[labels[b]]))
                    .then(a.cmp(&b))
            })
            .expect("k <= n guarantees a donor cluster");
        sizes[labels[worst]] -= 1;
        labels[worst] = c;
        sizes[c] = 1;
    }
}

/// Greedy nearest-neighbour path over local indices `0..ids.len()`, starting
/// at `start`. Ties go to the lexicographically smallest id.
pub fn greedy_path_by(ids: &[String], start: usize, sim: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let n = ids.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    visited[start] = true;
    order.push(start);
    for _ in 1..n {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if visited[j] {
                continue;
            }
            let s = sim(current, j);
            best = match best {
                None => Some((j, s)),
                Some((b, bs)) if s > bs || (s == bs && ids[j] < ids[b]) => Some((j, s)),
                keep => keep,
            };
        }
        let (next, _) = best.unwrap();
        visited[next] = true;
        order.push(next);
        current = next;
    }
    order
}

/// Greedy path over `ids` using the precomputed similarity matrix.
pub fn order_greedy_path(
    ids: &[String],
    sim: &SimilarityMatrix,
    start: &str,
) -> Result<Vec<String>, AssignError> {
    let start_pos = ids
        .iter()
        .position(|id| id == start)
        .ok_or_else(|| AssignError::StartNotInSet(start.to_owned()))?;
    let rows = ids
        .iter()
        .map(|id| {
            sim.index_of(id)
                .ok_or_else(|| AssignError::MissingEmbedding(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let order = greedy_path_by(ids, start_pos, |a, b| sim.get(rows[a], rows[b]));
    Ok(order.into_iter().map(|i| ids[i].clone()).collect())
}

/// Standardized 2-D PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarCoords {
    pub points: Vec<[f64; 2]>,
    /// Covariance rank below 2: the second coordinate is zero.
    pub degenerate: bool,
    pub eigenvalues: [f64; 2],
}

/// Projects onto the top two principal components, fixes each component's
/// sign so its largest-magnitude loading is positive, and standardizes
/// each coordinate to mean 0 and population variance 1.
pub fn pca_2d(vectors: &[Vec<f64>]) -> Result<PlanarCoords, AssignError> {
    let n = vectors.len();
    let dim = vectors.first().map_or(0, Vec::len);
    if n < 3 || dim < 2 {
        return Err(AssignError::PcaTooSmall { n, dim });
    }
    let (mean, cov) = linalg::covariance(vectors);
    let eig = linalg::symmetric_eigen(&cov, dim);
    let top = eig.values[0].max(0.0);
    let rank_tol = 1e-10 * top.max(f64::MIN_POSITIVE);
    let degenerate = !(eig.values[1] > rank_tol);
    let mut points = vec![[0.0; 2]; n];
    for c in 0..2 {
        if eig.values[c] <= rank_tol {
            continue;
        }
        let mut axis = eig.vectors[c].clone();
        let lead = axis
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        let proj: Vec<f64> = vectors
            .iter()
            .map(|x| x.iter().zip(&mean).zip(&axis).map(|((x, m), a)| (x - m) * a).sum())
            .collect();
        let mu = proj.iter().sum::<f64>() / n as f64;
        let sd = (proj.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
        for (pt, p) in points.iter_mut().zip(&proj) {
            pt[c] = if sd > 0.0 { (p - mu) / sd } else { 0.0 };
        }
    }
    Ok(PlanarCoords {
        points,
        degenerate,
        eigenvalues: [eig.values[0], eig.values[1]],
    })
}

/// Angular partition of the plane. `members[j]` excludes the common node,
/// which every petal shares as its first element (see [`Petals::cycle`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Petals {
    /// Index (into the input) of the minimal-norm point.
    pub common: usize,
    /// Petal whose sector contains the common node.
    pub home: usize,
    pub members: Vec<Vec<usize>>,
}

impl Petals {
    /// The common node followed by petal `j`'s members.
    pub fn cycle(&self, j: usize) -> Vec<usize> {
        std::iter::once(self.common)
            .chain(self.members[j].iter().copied())
            .collect()
    }
}

/// Sector of angle `atan2(y, x)` in `[0, 2pi)` among `k` equal half-open sectors.
pub fn petal_of(point: [f64; 2], k: usize) -> usize {
    let tau = std::f64::consts::TAU;
    let mut theta = point[1].atan2(point[0]);
    if theta < 0.0 {
        theta += tau;
    }
    let s = theta * k as f64 / tau;
    let mut j = s.floor() as usize;
    // Snap points that sit on a boundary up to rounding error.
    if (j + 1) as f64 - s < 1e-12 {
        j += 1;
    }
    j % k
}

pub fn assign_petal(coords: &PlanarCoords, k: usize) -> Result<Petals, AssignError> {
    let n = coords.points.len();
    if k == 0 || k > n {
        return Err(AssignError::KExceedsN { k, n });
    }
    let norm2 = |p: &[f64; 2]| p[0] * p[0] + p[1] * p[1];
    let common = (0..n)
        .min_by(|&a, &b| norm2(&coords.points[a]).total_cmp(&norm2(&coords.points[b])).then(a.cmp(&b)))
        .unwrap();
    let mut members = vec![Vec::new(); k];
    for (i, p) in coords.points.iter().enumerate() {
        if i != common {
            members[petal_of(*p, k)].push(i);
        }
    }
    Ok(Petals {
        common,
        home: petal_of(coords.points[common], k),
        members,
    })
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Total Euclidean length of the closed tour.
pub fn tour_length(points: &[[f64; 2]], tour: &[usize]) -> f64 {
    if tour.len() < 2 {
        return 0.0;
    }
    (0..tour.len())
        .map(|i| dist(points[tour[i]], points[tour[(i + 1) % tour.len()]]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealingSchedule {
    pub iterations: usize,
    pub initial_temp: f64,
    pub cooling: f64,
}

impl From<&AssignmentConfig> for AnnealingSchedule {
    fn from(cfg: &AssignmentConfig) -> Self {
        Self {
            iterations: cfg.mcmc_iterations,
            initial_temp: cfg.mcmc_initial_temp,
            cooling: cfg.mcmc_cooling,
        }
    }
}

/// Simulated-annealing Metropolis chain over closed tours with 2-opt segment
/// reversals. Position 0 stays fixed, so the returned tour starts at point 0.
/// Returns the shortest tour seen.
pub fn order_mcmc_loop(points: &[[f64; 2]], schedule: AnnealingSchedule, rng: &mut Rng) -> Vec<usize> {
    let n = points.len();
    let mut tour: Vec<usize> = (0..n).collect();
    if n <= 3 {
        return tour;
    }
    let mut length = tour_length(points, &tour);
    let mut best = tour.clone();
    let mut best_length = length;
    let mut temp = schedule.initial_temp;
    for _ in 0..schedule.iterations {
        let mut i = rng.random_range(1..n);
        let mut j = rng.random_range(1..n);
        if i == j {
            temp *= schedule.cooling;
            continue;
        }
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let a = points[tour[i - 1]];
        let b = points[tour[i]];
        let c = points[tour[j]];
        let d = points[tour[(j + 1) % n]];
        let delta = dist(a, c) + dist(b, d) - dist(a, b) - dist(c, d);
        let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temp).exp();
        if accept {
            tour[i..=j].reverse();
            length += delta;
            if length < best_length - 1e-12 {
                best_length = length;
                best.copy_from_slice(&tour);
            }
        }
        temp *= schedule.cooling;
    }
    best
}

/// Embeddings by submission id, rejecting duplicates.
fn lookup(embs: &[ProgramEmbedding]) -> Result<HashMap<&str, &ProgramEmbedding>, AssignError> {
    let mut map = HashMap::with_capacity(embs.len());
    for e in embs {
        if map.insert(e.submission_id.as_str(), e).is_some() {
            return Err(AssignError::DuplicateId(e.submission_id.clone()));
        }
        if embed::norm(&e.vector) == 0.0 {
            return Err(AssignError::ZeroVector(e.submission_id.clone()));
        }
    }
    Ok(map)
}

fn grader_rng(seed: u64, stream: u64, grader: usize) -> Rng {
    seed::rng(seed::derive(seed, stream) ^ grader as u64)
}

/// Builds a full assignment over every embedded submission.
pub fn build_assignment(embs: &[ProgramEmbedding], cfg: &AssignmentConfig) -> Result<Assignment, AssignError> {
    cfg.validate()?;
    let by_id = lookup(embs)?;
    let ids: Vec<String> = embs.iter().map(|e| e.submission_id.clone()).collect();
    let (validations, regular) =
        select_validations(&ids, cfg.n_validations, seed::derive(cfg.seed, STREAM_VALIDATION))?;
    let k = cfg.n_graders;
    if regular.len() < k {
        return Err(AssignError::TooFewSubmissions {
            n: regular.len(),
            k,
        });
    }
    let unit: Vec<Vec<f64>> = regular.iter().map(|id| normalized(&by_id[id.as_str()].vector)).collect();
    let position: HashMap<&str, usize> = regular.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let cosine = |a: usize, b: usize| dot(&unit[a], &unit[b]);

    // Ordered regular queues, as indices into `regular`.
    let queues: Vec<Vec<usize>> = match cfg.algorithm {
        Algorithm::Random | Algorithm::Snake => {
            let mut rng = seed::rng_for(cfg.seed, STREAM_PARTITION);
            let parts = assign_random(&regular, k, &mut rng)?;
            parts
                .into_iter()
                .enumerate()
                .map(|(g, part)| {
                    let mut idx: Vec<usize> = part.iter().map(|id| position[id.as_str()]).collect();
                    let mut rng = grader_rng(cfg.seed, STREAM_ORDER, g);
                    if cfg.algorithm == Algorithm::Random {
                        idx.shuffle(&mut rng);
                        idx
                    } else {
                        path_from_random_start(&regular, &idx, &mut rng, cosine)
                    }
                })
                .collect()
        }
        Algorithm::Cluster | Algorithm::ClusterPath => {
            let km = kmeans_cosine(&unit, k, seed::derive(cfg.seed, STREAM_KMEANS), cfg.kmeans_max_iters)?;
            (0..k)
                .map(|g| {
                    let mut idx: Vec<usize> = (0..regular.len()).filter(|&i| km.labels[i] == g).collect();
                    let mut rng = grader_rng(cfg.seed, STREAM_ORDER, g);
                    if cfg.algorithm == Algorithm::Cluster {
                        idx.shuffle(&mut rng);
                        idx
                    } else {
                        path_from_random_start(&regular, &idx, &mut rng, cosine)
                    }
                })
                .collect()
        }
        Algorithm::PetalLoop | Algorithm::PetalPath => {
            let raw: Vec<Vec<f64>> = regular.iter().map(|id| by_id[id.as_str()].vector.clone()).collect();
            let coords = pca_2d(&raw)?;
            let petals = assign_petal(&coords, k)?;
            (0..k)
                .map(|g| {
                    let cycle = petals.cycle(g);
                    let pts: Vec<[f64; 2]> = cycle.iter().map(|&i| coords.points[i]).collect();
                    let local = if cfg.algorithm == Algorithm::PetalLoop {
                        let mut rng = grader_rng(cfg.seed, STREAM_ORDER, g);
                        order_mcmc_loop(&pts, cfg.into(), &mut rng)
                    } else {
                        let names: Vec<String> = cycle.iter().map(|&i| regular[i].clone()).collect();
                        greedy_path_by(&names, 0, |a, b| -dist(pts[a], pts[b]))
                    };
                    // The shared node is only graded by its home petal.
                    local
                        .into_iter()
                        .map(|l| cycle[l])
                        .filter(|&i| i != petals.common || g == petals.home)
                        .collect()
                })
                .collect()
        }
    };

    let graders = queues
        .into_iter()
        .enumerate()
        .map(|(g, q)| {
            let regular_ids: Vec<String> = q.into_iter().map(|i| regular[i].clone()).collect();
            let mut rng = grader_rng(cfg.seed, STREAM_INSERT, g);
            GraderQueue {
                grader: g,
                queue: insert_validations(regular_ids, &validations, &mut rng),
            }
        })
        .collect();
    Ok(Assignment {
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        graders,
    })
}

fn path_from_random_start(
    regular: &[String],
    idx: &[usize],
    rng: &mut Rng,
    cosine: impl Fn(usize, usize) -> f64,
) -> Vec<usize> {
    if idx.is_empty() {
        return Vec::new();
    }
    let names: Vec<String> = idx.iter().map(|&i| regular[i].clone()).collect();
    let start = rng.random_range(0..idx.len());
    greedy_path_by(&names, start, |a, b| cosine(idx[a], idx[b]))
        .into_iter()
        .map(|l| idx[l])
        .collect()
}

/// Places the validations, in random order, at uniformly random positions.
pub fn insert_validations(regular: Vec<String>, validations: &[String], rng: &mut Rng) -> Vec<QueueEntry> {
    let total = regular.len() + validations.len();
    let mut order: Vec<&String> = validations.iter().collect();
    order.shuffle(rng);
    let mut slots = rand::seq::index::sample(rng, total, validations.len()).into_vec();
    slots.sort_unstable();
    let mut out = Vec::with_capacity(total);
    let mut regular = regular.into_iter();
    let mut vals = order.into_iter();
    let mut slots = slots.into_iter().peekable();
    for pos in 0..total {
        if slots.peek() == Some(&pos) {
            slots.next();
            out.push(QueueEntry {
                id: vals.next().unwrap().clone(),
                validation: true,
            });
        } else {
            out.push(QueueEntry {
                id: regular.next().unwrap(),
                validation: false,
            });
        }
    }
    out
}
