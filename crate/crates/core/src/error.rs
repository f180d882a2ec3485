use thiserror::Error;

/// Pipeline stage identifiers used when an estimation step fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Binning,
    PatternFit,
    Autocorr,
    SigmaFit,
    TauFit,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Binning => "binning",
            Stage::PatternFit => "pattern-fit",
            Stage::Autocorr => "autocorrelation",
            Stage::SigmaFit => "sigma-fit",
            Stage::TauFit => "tau-fit",
        };
        f.write_str(name)
    }
}

/// One malformed line in a tick file.
#[derive(Debug, Clone)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid session: {0}")]
    InvalidSession(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("out-of-session tick (day {day}, t {t} s, symbol {symbol}): {reason}")]
    OutOfSession {
        day: u32,
        t: f64,
        symbol: String,
        reason: String,
    },

    #[error("constant series: autocorrelation is undefined")]
    ConstantSeries,

    #[error(
        "n_max {n_max} leaves truncated tail mass {tail:.3e} above 1e-9; suggested n_max >= {suggested}"
    )]
    TailMass {
        n_max: usize,
        tail: f64,
        suggested: usize,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("parse failure ({}): {}", summary(errors), detail(errors))]
    Parse { errors: Vec<LineError> },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage at which a pipeline error occurred, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn summary(errors: &[LineError]) -> String {
    format!(
        "{} offending line{}",
        errors.len(),
        if errors.len() == 1 { "" } else { "s" }
    )
}

fn detail(errors: &[LineError]) -> String {
    errors
        .iter()
        .map(|e| format!("line {}: {}", e.line, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
