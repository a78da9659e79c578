use std::fmt;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Invalid arguments or parameter domain.
    Usage(String),
    /// The computation itself failed.
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<dispest::Error> for CliError {
    fn from(e: dispest::Error) -> Self {
        use dispest::Error as E;
        match e {
            E::Domain(_) | E::Config(_) | E::ModeOutOfRange { .. } | E::SameMode(_) => CliError::Usage(e.to_string()),
            E::Unphysical { .. }
            | E::NotSymplectic { .. }
            | E::Truncation { .. }
            | E::PureState { .. }
            | E::RldUnavailable(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
