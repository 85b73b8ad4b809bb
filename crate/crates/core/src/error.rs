use std::fmt;

use thiserror::Error;

/// One rejected field, addressed by its dotted path (`params.theta`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Prefixes the path with a parent segment.
    pub fn nested(mut self, parent: &str) -> Self {
        self.path = format!("{parent}.{}", self.path);
        self
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// All field violations found while validating one value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid value: {}", join(.0))]
pub struct ValidationError(pub Vec<FieldError>);

fn join(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl ValidationError {
    pub fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self(vec![FieldError::new(path, message)])
    }

    pub fn fields(&self) -> &[FieldError] {
        &self.0
    }

    pub(crate) fn from_list(errors: Vec<FieldError>) -> Result<(), Self> {
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Self(errors))
        }
    }
}

/// Errors raised by topology construction and state handling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinonError {
    #[error("unsupported degree class {0} (expected 2, 4 or 8)")]
    UnsupportedDegree(u32),
    #[error("grid {width}x{height} too small for degree class {degree}")]
    GridTooSmall { degree: u32, width: usize, height: usize },
    #[error("node {node} has {degree} links, more than the supported maximum of {max}")]
    DegreeTooLarge { node: usize, degree: usize, max: usize },
    #[error("position ({x}, {y}) outside the {width}x{height} lattice")]
    PositionOutOfRange { x: usize, y: usize, width: usize, height: usize },
    #[error("total quantity must be positive and finite, got {0}")]
    InvalidOmega(f64),
    #[error("state does not match the network: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}
