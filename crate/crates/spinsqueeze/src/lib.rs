//! Collective spin squeezing of alkali ensembles probed by the Faraday interaction.

pub mod cli;
pub mod error;
pub mod gaussian_core;
pub mod numerics;
pub mod optical_pumping;
pub mod paraxial;
pub mod protocols;
pub mod qnd_ode;
pub mod spin_algebra;

pub use error::{Error, Result};
