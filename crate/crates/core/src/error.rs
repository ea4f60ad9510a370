use thiserror::Error;

/// Errors raised by the link model, the quadrature routines and the oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: must be {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("argument {value} outside the domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("QBER undefined: at least one receiver has zero click probability, so no bits are sifted")]
    UndefinedQber,

    #[error("reception rate is identically zero (no pairs emitted), no power-law distribution exists")]
    DegenerateReception,

    #[error("numerical integration missed relative tolerance {tol:e}: estimate {estimate:e}, error estimate {error:e}")]
    Tolerance {
        tol: f64,
        estimate: f64,
        error: f64,
    },

    #[error("simulation would sift only {expected:.3} bits on average (minimum {minimum}); boost the parameters or force the run")]
    Underpowered { expected: f64, minimum: f64 },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Checks that `value` is finite and strictly positive.
pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            constraint: "finite and > 0",
        })
    }
}

/// Checks that `value` is finite and non-negative.
pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            constraint: "finite and >= 0",
        })
    }
}

/// Checks that `value` lies in the closed unit interval.
pub(crate) fn probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            constraint: "in [0, 1]",
        })
    }
}
