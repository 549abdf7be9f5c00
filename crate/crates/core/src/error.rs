use alloc::string::String;
use alloc::vec::Vec;

/// Error kinds shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its invariant. `field` names the offending key.
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    /// Tensor or matrix extents do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// An argument is outside its domain (bad label, empty list, length mismatch).
    #[error("argument error: {0}")]
    Argument(String),
    /// A non-finite value appeared where a finite one is required.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Several configuration errors reported together.
    #[error("{} configuration errors: {}", .0.len(), join(.0))]
    ConfigList(Vec<Error>),
}

fn join(errors: &[Error]) -> String {
    let mut out = String::new();
    for (i, e) in errors.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&alloc::format!("{e}"));
    }
    out
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

impl Error {
    /// `Ok` for no errors, the error itself for one, `ConfigList` otherwise.
    pub fn collect(mut errors: Vec<Error>) -> Result<()> {
        match errors.len() {
            0 => Ok(()),
            1 => Err(errors.pop().unwrap_or_else(|| Error::argument("unreachable"))),
            _ => Err(Error::ConfigList(errors)),
        }
    }

    /// True for `Config` and `ConfigList`.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::ConfigList(_))
    }
}

pub type Result<T> = core::result::Result<T, Error>;
