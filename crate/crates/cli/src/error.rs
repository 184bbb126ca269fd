use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A check or a solver failed on a well-formed configuration.
    #[error("{0}")]
    Failed(String),

    #[error(transparent)]
    Core(#[from] kylebridge::error::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kylebridge::error::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidParameter { .. } | E::InvalidDomain { .. } | E::OutsideDomain { .. }) => 2,
            _ => 1,
        }
    }
}
