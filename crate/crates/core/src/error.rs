use std::fmt;

use thiserror::Error;

/// One violated constraint, with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

/// Every constraint violation found while validating a configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// Turns a non-empty report into an error.
    pub fn into_result(self) -> Result<(), Error> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }

    pub fn mentions(&self, path: &str) -> bool {
        self.issues
            .iter()
            .any(|i| i.path == path || i.message.contains(path))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, issue) in self.issues.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            write!(f, "  {}: {}", issue.path, issue.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration:\n{0}")]
    Validation(ValidationReport),

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("bias target unreachable on pixel {pixel}: needs SPDE {needed:.4}, curve spans [{min:.4}, {max:.4}]")]
    UnreachableTarget {
        pixel: usize,
        needed: f64,
        min: f64,
        max: f64,
    },

    #[error(
        "block incomplete: {sifted} of {target} sifted bits; projected duration {projected_s:.3e} s exceeds cap {cap_s:.3e} s"
    )]
    PartialBlock {
        sifted: u64,
        target: u64,
        projected_s: f64,
        cap_s: f64,
        /// Detector avalanches per second seen so far.
        raw_rate_hz: f64,
        /// Signal-class majority-basis error rate seen so far.
        qber: f64,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
