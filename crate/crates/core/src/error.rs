use thiserror::Error;

use crate::heap::HeapError;
use crate::policy::PolicyError;

/// A configuration value that violates its documented invariant.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Failure while a simulation is running.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("heap: {0}")]
    Heap(#[from] HeapError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
}
