use std::fmt;

/// A core error tagged with the module that raised it.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub error: ccim_core::Error,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(module: &'static str, error: ccim_core::Error) -> Self {
        CliError { module, error }
    }

    pub fn argument(module: &'static str, msg: impl Into<String>) -> Self {
        CliError::new(module, ccim_core::Error::Argument(msg.into()))
    }

    pub fn config(module: &'static str, msg: impl Into<String>) -> Self {
        CliError::new(module, ccim_core::Error::Config(msg.into()))
    }
}

/// One line: `error[<class>]: <module>: <message>`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.error.to_string().replace('\n', " ");
        write!(f, "error[{}]: {}: {}", self.error.class(), self.module, msg)
    }
}

pub trait Tag<T> {
    fn tag(self, module: &'static str) -> CliResult<T>;
}

impl<T> Tag<T> for ccim_core::Result<T> {
    fn tag(self, module: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::new(module, e))
    }
}
