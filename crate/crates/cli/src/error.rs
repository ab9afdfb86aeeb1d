use logicnet::ErrorFamily;

/// Process exit codes. Clap reports its own parse errors with code 2.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const INPUT: i32 = 5;
    pub const CONFIG: i32 = 6;
    pub const NUMERIC: i32 = 7;
    pub const INVARIANT: i32 = 8;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] logicnet::Error),
    #[error("internal check failed: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Invariant(_) => exit::INVARIANT,
            CliError::Core(e) => match e.family() {
                ErrorFamily::Io => exit::IO,
                ErrorFamily::Format => exit::FORMAT,
                ErrorFamily::Input => exit::INPUT,
                ErrorFamily::Config => exit::CONFIG,
                ErrorFamily::Numeric => exit::NUMERIC,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
