use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field} = {value}: {reason}")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("momentum grid does not cover the packet: halfwidth * sigma = {halfwidth_sigma} < 5")]
    GridSupport { halfwidth_sigma: f64 },

    #[error("position box too small: half-length {available} < required {required}")]
    GridBox { required: f64, available: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("quadrature not converged for {quantity}: order doubling from {order} changed it by {relative_change:e} (relative)")]
    NotConverged {
        quantity: &'static str,
        order: usize,
        relative_change: f64,
    },

    #[error("density wraps around the periodic box at t = {time}: edge/peak = {edge_ratio:e}")]
    WrapAround { time: f64, edge_ratio: f64 },

    #[error("degenerate frame: gamma = {gamma} leaves the rescaling exponent undefined")]
    DegenerateFrame { gamma: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("errors below the noise floor ({floor:e}); convergence order unmeasurable")]
    BelowNoiseFloor { floor: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}
