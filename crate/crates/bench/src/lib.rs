//! Fixtures shared by the benchmarks.

use rand::Rng;
use simgrade::{embed, seed, synth, EmbedConfig, PrepConfig, ProgramEmbedding, SubmissionSet};

/// A demo-grammar problem of `n` submissions and its trained program embeddings.
pub fn demo_problem(n: usize, seed: u64) -> (SubmissionSet, Vec<ProgramEmbedding>) {
    let programs = synth::sample_corpus(&synth::demo_grammar(), n, seed).expect("demo grammar samples");
    let set = synth::to_submissions("bench", &programs);
    let cfg = EmbedConfig {
        seed,
        ..EmbedConfig::default()
    };
    let (_, embs) = embed::embed_submissions(&set, &PrepConfig::default(), 1, &cfg).expect("demo corpus embeds");
    (set, embs)
}

/// `n` uniform random vectors in `[-1, 1]^dim`.
pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// `n` uniform random points in the square `[-2, 2]^2`.
pub fn random_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect()
}
