use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite {what} at t={t}, x={x:?}")]
    NonFinite {
        what: &'static str,
        t: f64,
        x: Vec<f64>,
    },

    #[error("control {z:?} is outside the control set")]
    ControlOutsideSet { z: Vec<f64> },

    #[error("Hamiltonian not finite: {0}")]
    HamiltonianNotFinite(String),

    #[error("tridiagonal solve failed at time level {level}")]
    TridiagonalSolve { level: usize },

    #[error("point t={t}, x={x:?} lies outside the field grid")]
    OutsideGrid { t: f64, x: Vec<f64> },

    #[error("all {n_paths} simulated paths diverged")]
    AllDiverged { n_paths: usize },

    #[error("{discarded} of {n_paths} paths diverged, above the 0.1% limit")]
    TooManyDiverged { discarded: usize, n_paths: usize },

    #[error(
        "{escaped} of {n_paths} paths left the field grid, above the 0.1% limit; use a larger grid"
    )]
    TooManyEscaped { escaped: usize, n_paths: usize },

    #[error("incompatible data: {0}")]
    Incompatible(String),

    #[error("invalid simulation setup: {0}")]
    InvalidSimulation(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
