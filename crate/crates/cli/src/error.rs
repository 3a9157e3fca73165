use gridbench_client::ClientError;
use gridbench_core::dataset::DatasetError;
use gridbench_core::harness::HarnessError;
use gridbench_core::levels::LevelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Failed(String),
    /// Stdout was closed by the reader, as with `| head`.
    #[error("output closed")]
    ClosedOutput,
}

impl CliError {
    /// Process exit status: 1 usage, 2 I/O, 3 provider.
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Failed(_) => 1,
            CliError::Io(_) => 2,
            CliError::Provider(_) => 3,
            CliError::ClosedOutput => 0,
        }
    }
}

impl From<LevelError> for CliError {
    fn from(e: LevelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Level(l) => l.into(),
            DatasetError::NotPlanLevel(_) | DatasetError::UnknownTask(_) => CliError::Usage(e.to_string()),
            DatasetError::ExpertFailed { .. } => CliError::Failed(e.to_string()),
            DatasetError::Io { .. } | DatasetError::Schema { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Level(l) => l.into(),
            HarnessError::Dataset(d) => d.into(),
            HarnessError::UnknownStrategy(_) => CliError::Usage(e.to_string()),
            HarnessError::Io { .. } => CliError::Io(e.to_string()),
            HarnessError::Mismatch { .. } | HarnessError::NoAnticipatoryStack { .. } => CliError::Failed(e.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Config(_) | ClientError::MissingKey(_) => CliError::Usage(e.to_string()),
            ClientError::Audit(_) => CliError::Io(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            CliError::ClosedOutput
        } else {
            CliError::Io(format!("stdout: {e}"))
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
