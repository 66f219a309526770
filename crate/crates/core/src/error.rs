//! Error type shared by every module.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point ({t}, {x}) is not a grid node")]
    NodeNotOnGrid { t: f64, x: f64 },

    #[error("rectangle corners are not grid nodes or are out of order")]
    MisalignedRect,

    #[error("fields live on different grids or placements")]
    GridMismatch,

    #[error("kernel violates incomparability support at cell pair ({0}, {1}) x ({2}, {3})")]
    KernelSupport(usize, usize, usize, usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series diverged: term magnitude exceeded {0:e}")]
    SeriesDiverged(f64),

    #[error("forward solution blew up at node ({i}, {j})")]
    BlowUp { i: usize, j: usize },

    #[error("fixed point failed to converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("control denominator vanished at node ({i}, {j})")]
    SingularControl { i: usize, j: usize },

    #[error("derivative is singular at u = {0}")]
    SingularDerivative(f64),

    #[error("no bracketing interval found below {0}")]
    BracketNotFound(f64),
}
