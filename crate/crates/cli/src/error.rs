use std::fmt;
use std::path::Path;

use sidkit::bank::BankError;
use sidkit::fusion::FusionError;
use sidkit::metrics::MetricsError;
use sidkit::probe::ProbeError;
use sidkit::projection::ProjectionError;

pub const EXIT_DOMAIN: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("i/o error on {}: {err}", path.display()),
        }
    }

    fn classify(io: bool, err: impl fmt::Display) -> Self {
        Self {
            code: if io { EXIT_IO } else { EXIT_DOMAIN },
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<BankError> for CliError {
    fn from(e: BankError) -> Self {
        Self::classify(matches!(e, BankError::Io { .. }), e)
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        Self::classify(matches!(e, ProbeError::Io { .. }), e)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let io = matches!(e, MetricsError::Io { .. } | MetricsError::Probe(ProbeError::Io { .. }));
        Self::classify(io, e)
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        let io = matches!(e, FusionError::Bank(BankError::Io { .. }) | FusionError::Probe(ProbeError::Io { .. }));
        Self::classify(io, e)
    }
}

impl From<ProjectionError> for CliError {
    fn from(e: ProjectionError) -> Self {
        Self::classify(matches!(e, ProjectionError::Io { .. }), e)
    }
}
