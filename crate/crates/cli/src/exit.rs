//! Exit-code classification: 1 for invalid input, 2 for I/O failures.

use std::fmt;

pub const VALIDATION: u8 = 1;
pub const IO: u8 = 2;

/// Input that was read successfully but is malformed.
#[derive(Debug)]
pub struct Invalid(pub String);

impl Invalid {
    pub fn from_display(e: impl fmt::Display) -> Self {
        Invalid(e.to_string())
    }
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<sentigraph::Error>() {
            return if e.is_io() { IO } else { VALIDATION };
        }
        if let Some(e) = cause.downcast_ref::<sentigraph::graph::GraphIoError>() {
            return match e {
                sentigraph::graph::GraphIoError::Io { .. } => IO,
                _ => VALIDATION,
            };
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
    }
    VALIDATION
}
