use thiserror::Error;

/// Crate-wide error type. Stage orchestration wraps these with the stage name
/// so a failing run reports where it died.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("channel `{0}` not found")]
    MissingChannel(String),

    #[error("design: {0}")]
    Design(String),

    #[error("coordinate descent did not converge at alpha={alpha:.6e}: max coefficient change {delta:.3e} after {sweeps} sweeps")]
    NoConvergence { alpha: f64, delta: f64, sweeps: usize },

    #[error("solve: {0}")]
    Solve(String),

    #[error("expert {expert}: {message}")]
    Expert { expert: String, message: String },

    #[error("cache: {0}")]
    Cache(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
