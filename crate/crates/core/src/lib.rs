//! Similarity-aware assignment and ordering of code submissions for human graders.
//!
//! The crate covers the whole pipeline:
//!
//! * [`corpus`]: submission and grading-log data model, JSONL ingestion.
//! * [`codeprep`]: lenient Python-style preprocessing, tokenization, vocabulary.
//! * [`embed`]: skip-gram token embeddings, program embeddings, cosine/Jaccard similarity.
//! * [`synth`]: weighted-grammar generator of labeled synthetic programs.
//! * [`assign`]: the six assignment/ordering algorithms (random, cluster,
//!   cluster-path, snake, petal-loop, petal-path).
//! * [`simulate`]: similarity-window grading-error model and algorithm comparison.
//! * [`stats`]: least squares, bootstrap tests and grader-log analytics.

pub mod assign;
pub mod codeprep;
pub mod corpus;
pub mod embed;
mod error;
pub mod linalg;
pub mod seed;
pub mod simulate;
pub mod stats;
pub mod synth;

pub use assign::{Algorithm, Assignment, AssignmentConfig, GraderQueue, QueueEntry};
pub use codeprep::{PrepConfig, TokenStream, Vocab};
pub use corpus::{GradingLogEntry, Submission, SubmissionSet};
pub use embed::{EmbedConfig, ProgramEmbedding, SimilarityMatrix, TokenEmbeddings};
pub use error::{Error, ErrorKind, Result};
pub use simulate::{ComparisonReport, ErrorModel, SimulationConfig, SimulationResult};
pub use stats::{BootstrapResult, OlsFit};
pub use synth::{Grammar, LabeledProgram};
