//! Worked control problems and their solvers.

pub mod harvest;
pub mod lq;
pub mod ml;
pub mod perturb;
