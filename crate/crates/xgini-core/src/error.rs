//! Error type shared by every core module.

use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class, used by front ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration (bad thresholds, empty year range, bad rosters).
    Config,
    /// Unreadable, malformed or insufficient input data.
    Input,
    /// The numbers themselves refuse: degenerate spectra, non-convergence,
    /// disconnected specialization matrices.
    Numerical,
    /// Anything else.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: expected header `{expected}`, found `{found}`")]
    HeaderMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error("{path}: {count} malformed row(s), e.g. {details}")]
    MalformedRows {
        path: String,
        count: usize,
        /// Offending 1-based line numbers (capped).
        lines: Vec<u64>,
        details: String,
    },

    #[error("empty sample: no trade rows survive the configured filters")]
    EmptySample,

    #[error("duplicate gini observation for {country} in {year} (line {line})")]
    DuplicateGini { country: String, year: i32, line: u64 },

    #[error("gini value {value} outside [0, 100] for {country} in {year} (line {line})")]
    GiniOutOfRange {
        country: String,
        year: i32,
        value: f64,
        line: u64,
    },

    #[error("year {year} not present in trade table")]
    YearAbsent { year: i32 },

    #[error("no gini observations for {country}")]
    NoGiniObservations { country: String },

    #[error(
        "specialization matrix splits into {} components; scores are not comparable across \
         components: {}",
        components.len(),
        describe_components(components)
    )]
    Disconnected { components: Vec<Vec<String>> },

    #[error("degenerate spectrum: {detail}")]
    DegenerateSpectrum { detail: String },

    #[error("no convergence after {steps} iteration(s); last delta {last_delta:e}")]
    NonConvergence { steps: usize, last_delta: f64 },

    #[error("product space needs at least 2 products, got {got}")]
    TooFewProducts { got: usize },

    #[error("empty scope: no trade for {scope} in {year}")]
    EmptyScope { scope: String, year: i32 },

    #[error("coordinates missing for {count} product(s), e.g. {examples}")]
    MissingCoordinates { count: usize, examples: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Which exit-code family this error belongs to.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::HeaderMismatch { .. }
            | Error::MalformedRows { .. }
            | Error::EmptySample
            | Error::DuplicateGini { .. }
            | Error::GiniOutOfRange { .. }
            | Error::YearAbsent { .. }
            | Error::NoGiniObservations { .. }
            | Error::EmptyScope { .. }
            | Error::MissingCoordinates { .. }
            | Error::TooFewProducts { .. }
            | Error::InvalidInput(_) => ErrorClass::Input,
            Error::Disconnected { .. }
            | Error::DegenerateSpectrum { .. }
            | Error::NonConvergence { .. } => ErrorClass::Numerical,
        }
    }
}

fn describe_components(components: &[Vec<String>]) -> String {
    let mut parts = Vec::new();
    for group in components.iter().take(4) {
        let mut names: Vec<&str> = group.iter().take(5).map(String::as_str).collect();
        if group.len() > 5 {
            names.push("...");
        }
        parts.push(format!("[{}]", names.join(", ")));
    }
    if components.len() > 4 {
        parts.push("...".to_string());
    }
    parts.join(" ")
}

pub type Result<T> = std::result::Result<T, Error>;
