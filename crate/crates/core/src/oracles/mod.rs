//! Reference solvers the MLP estimator is checked against.

mod cole_hopf;
mod feynman_kac;
mod hopf;
mod ode_picard;
mod quadrature;

pub use cole_hopf::cole_hopf_hjb;
pub use feynman_kac::{feynman_kac, FeynmanKac, SourceTerm};
pub use hopf::{hopf_hj, ConvexTerm, HopfOptions, HopfSolution};
pub use ode_picard::ode_picard_oracle;
pub use quadrature::{quadrature_fixed_point_1d, GridFunction, QuadratureGrid, QuadratureOptions};

use crate::error::{Error, Result};
use crate::parallel::Welford;

/// Monte Carlo mean with its standard error `s / √N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl McEstimate {
    pub(crate) fn from_welford(w: &Welford) -> Self {
        let samples = w.count();
        Self {
            mean: w.mean(),
            std_error: (w.variance() / samples as f64).sqrt(),
            samples,
        }
    }
}

pub(crate) fn check_samples(samples: u64) -> Result<()> {
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2 samples"));
    }
    Ok(())
}
