//! Error kinds and their exit codes.

use std::fmt;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or config files: exit 2.
    Config(String),
    /// Unreadable or malformed input data: exit 3.
    Data(String),
    /// A self-check failed: exit 4.
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, ctx: impl fmt::Display) -> Self {
        match self {
            Failure::Config(m) => Failure::Config(format!("{ctx}: {m}")),
            Failure::Data(m) => Failure::Data(format!("{ctx}: {m}")),
            Failure::Internal(m) => Failure::Internal(format!("{ctx}: {m}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

/// Parameter problems are config errors; everything else is bad data.
impl From<mvq::Error> for Failure {
    fn from(e: mvq::Error) -> Self {
        use mvq::Error as E;
        match e {
            E::InvalidPattern { .. }
            | E::DNotMultipleOfM { .. }
            | E::CoutNotMultipleOfD { .. }
            | E::TooFewSubvectors { .. }
            | E::InvalidBits(_)
            | E::InvalidParameter(_)
            | E::ConfigInvalid(_)
            | E::QNotIntegral { .. } => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;
