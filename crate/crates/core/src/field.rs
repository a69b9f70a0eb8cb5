//! Candidate solutions v(t, x) consumed by the verification routines.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Solved,
    ClosedForm,
    Loaded,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Solved => "solved",
            Provenance::ClosedForm => "closed_form",
            Provenance::Loaded => "loaded",
        }
    }
}

/// A value function and its spatial gradient, in the minimization convention.
pub trait ValueField: Send + Sync {
    fn state_dim(&self) -> usize;

    fn value(&self, t: f64, x: &[f64]) -> Result<f64>;

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn provenance(&self) -> Provenance;

    /// Spatial resolution, used for the discretization allowance (0 for exact fields).
    fn spatial_step(&self) -> f64 {
        0.0
    }
}

impl<F: ValueField + ?Sized> ValueField for alloc::sync::Arc<F> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }

    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        (**self).value(t, x)
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).gradient(t, x, out)
    }

    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }

    fn spatial_step(&self) -> f64 {
        (**self).spatial_step()
    }
}
