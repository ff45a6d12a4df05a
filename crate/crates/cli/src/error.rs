//! Process exit codes: 0 success, 1 usage, 2 data, 3 provider.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Provider = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn code(&self) -> u8 {
        self.kind as u8
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Classify<T> {
    fn usage(self) -> CliResult<T>;
    fn data(self) -> CliResult<T>;
    fn provider(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: ExitKind::Usage,
            error: e.into(),
        })
    }

    fn data(self) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: ExitKind::Data,
            error: e.into(),
        })
    }

    fn provider(self) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: ExitKind::Provider,
            error: e.into(),
        })
    }
}

pub fn usage(msg: impl fmt::Display) -> CliError {
    CliError {
        kind: ExitKind::Usage,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub fn data(msg: impl fmt::Display) -> CliError {
    CliError {
        kind: ExitKind::Data,
        error: anyhow::anyhow!("{msg}"),
    }
}
