use thiserror::Error;

/// Errors shared across the crate.
///
/// Numerical errors carry the offending chart point so that reports and CLI
/// messages can cite where a computation broke down.
#[derive(Debug, Error)]
pub enum Error {
    #[error("division by a jet with zero value term at point ({}, {}, {})", point[0], point[1], point[2])]
    JetDivisionByZero { point: [f64; 3] },

    #[error("{func} applied outside its real domain (value {value}) at point ({}, {}, {})", point[0], point[1], point[2])]
    JetDomain {
        func: &'static str,
        value: f64,
        point: [f64; 3],
    },

    #[error("point ({}, {}, {}) lies outside the field domain", point[0], point[1], point[2])]
    OutsideDomain { point: [f64; 3] },

    #[error("finite-difference stencil with step {step} leaves the domain at ({}, {}, {})", point[0], point[1], point[2])]
    StencilOutsideDomain { point: [f64; 3], step: f64 },

    #[error("metric component g{c}{c} is non-positive ({value}) at point ({}, {}, {})", point[0], point[1], point[2], c = component + 1)]
    DegenerateMetric {
        component: usize,
        value: f64,
        point: [f64; 3],
    },

    #[error("ODE state became non-finite at t = {t}; last valid t = {last_valid}")]
    OdeNonFinite { t: f64, last_valid: f64 },

    #[error("t = {t} is outside the solution interval [{lo}, {hi}]")]
    OdeOutsideInterval { t: f64, lo: f64, hi: f64 },

    #[error("domain constraint `{name}` is violated already at the initial point (value {value}, margin {margin})")]
    EmptyGuardInterval {
        name: String,
        value: f64,
        margin: f64,
    },

    #[error("invalid family parameters: {0}")]
    InvalidParams(String),

    #[error("instance failed integrity checks: {0}")]
    Unverifiable(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
