use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("past record reaches back to {have}, at least {needed} is required for relative tolerance {tol:e}")]
    InsufficientPast { have: f64, needed: f64, tol: f64 },

    #[error("state became non-finite at t = {time}")]
    BlowUp { time: f64 },

    #[error("quadrature failed at {at}: {reason}")]
    Quadrature { at: f64, reason: String },

    #[error("paths did not coalesce: gap {gap:e} at t = {time}")]
    NoCoalescence { time: f64, gap: f64 },

    #[error("drift is not monotone: <x - y, b(x) - b(y)> = {inner:e} > 0 at x = {x:?}, y = {y:?}")]
    NotMonotone { x: Vec<f64>, y: Vec<f64>, inner: f64 },

    #[error("contraction probe failed: rho = {rho} >= 1 at x = {x:?}, y = {y:?} ({perturbation})")]
    NoContraction {
        rho: f64,
        x: Vec<f64>,
        y: Vec<f64>,
        perturbation: String,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Invalid(_) => "invalid",
            Error::InsufficientPast { .. } => "insufficient-past",
            Error::BlowUp { .. } => "blow-up",
            Error::Quadrature { .. } => "quadrature",
            Error::NoCoalescence { .. } => "no-coalescence",
            Error::NotMonotone { .. } => "not-monotone",
            Error::NoContraction { .. } => "no-contraction",
            Error::Fit(_) => "fit",
            Error::Empty(_) => "empty",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

/// Checks that `value` lies in the open interval `(lo, hi)`.
pub(crate) fn open_interval(name: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<()> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::Domain { name, value, range })
    }
}
