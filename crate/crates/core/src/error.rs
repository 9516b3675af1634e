use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants split into input/config problems (exit code 1) and numerical
/// failures (exit code 2); see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("articles are not sorted by timestamp at position {position} ({article_id})")]
    Unsorted { position: usize, article_id: String },

    #[error("duplicate article id {0}")]
    DuplicateArticle(String),

    #[error("duplicate bar for {ticker} on {date}")]
    DuplicateBar { ticker: String, date: String },

    #[error("term {0:?} is both positive and negative in the lexicon")]
    LexiconConflict(String),

    #[error("score out of range at row {row}: {value}")]
    ScoreRange { row: usize, value: String },

    #[error("duplicate score for article {article_id} model {model_name} at row {row}")]
    DuplicateScore {
        row: usize,
        article_id: String,
        model_name: String,
    },

    #[error("missing returns for {ticker} around {date}")]
    MissingReturns { ticker: String, date: String },

    #[error("no eligible constituents: {0}")]
    NoConstituents(String),

    #[error("regressor {0} is collinear or constant after demeaning")]
    Collinearity(String),

    #[error("alternating demeaning did not converge after {iterations} sweeps (last change {last_delta:e})")]
    Convergence { iterations: usize, last_delta: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Collinearity(_)
            | Error::Convergence { .. }
            | Error::Numerical(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// 0 is never returned; 1 = input/config, 2 = numerical.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }
}
