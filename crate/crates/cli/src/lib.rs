//! Command implementations behind the `lrgan` binary.

pub mod commands;
pub mod config;
pub mod sweep;

pub use config::RunConfig;
pub use sweep::SweepSpec;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(lrgan::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for usage or configuration problems, 2 for everything that fails at
    /// run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

impl From<lrgan::Error> for CliError {
    fn from(e: lrgan::Error) -> Self {
        match e {
            lrgan::Error::Usage(m) => CliError::Usage(m),
            e => CliError::Core(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
