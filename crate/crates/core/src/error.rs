use crate::{assign, codeprep, corpus, embed, simulate, stats, synth};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Domain,
}

/// Union of every module error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Prep(#[from] codeprep::PrepError),
    #[error(transparent)]
    Embed(#[from] embed::EmbedError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Assign(#[from] assign::AssignError),
    #[error(transparent)]
    Simulate(#[from] simulate::SimulateError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

impl Error {
    /// Name of the underlying variant, such as `EmptyVocabulary`.
    pub fn code(&self) -> String {
        let debug = match self {
            Error::Corpus(e) => format!("{e:?}"),
            Error::Prep(e) => format!("{e:?}"),
            Error::Embed(e) => format!("{e:?}"),
            Error::Synth(e) => format!("{e:?}"),
            Error::Assign(e) => format!("{e:?}"),
            Error::Simulate(e) => format!("{e:?}"),
            Error::Stats(e) => format!("{e:?}"),
        };
        debug
            .split(|c: char| !c.is_ascii_alphanumeric())
            .next()
            .unwrap_or_default()
            .to_owned()
    }

    pub fn kind(&self) -> ErrorKind {
        let io = match self {
            Error::Corpus(e) => e.is_io(),
            Error::Embed(e) => e.is_io(),
            Error::Synth(e) => e.is_io(),
            _ => false,
        };
        if io {
            ErrorKind::Io
        } else {
            ErrorKind::Domain
        }
    }
}
