use thiserror::Error;

use crate::solver::SolveReport;

/// Which side of the admissible force-potential band was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSide {
    Lower,
    Upper,
}

impl std::fmt::Display for BandSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BandSide::Lower => write!(f, "lower"),
            BandSide::Upper => write!(f, "upper"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pressure law violates p' > 0 or 2p' + rho p'' > 0 at rho = {rho}")]
    Law { rho: f64 },
    #[error("range error: {0}")]
    Range(String),
    #[error("force potential {value} outside admissible band ({lower}, {upper}) on the {side} side")]
    Admissibility {
        side: BandSide,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("force potential is singular at ({0}, {1}, {2})")]
    Singularity(f64, f64, f64),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh validation failed: {0}")]
    Validation(String),
    #[error("cut-off coefficient matrix not elliptic: lambda_min = {lambda_min}")]
    Ellipticity { lambda_min: f64 },
    #[error("Newton iteration did not converge after {} iterations (gradient norm {:e})", .report.iterations, .report.gradient_norm)]
    NonConvergence { report: Box<SolveReport> },
    #[error("conjugate gradient met nonpositive curvature {curvature:e} at inner iteration {iteration}")]
    Curvature { curvature: f64, iteration: usize },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("config error in `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
