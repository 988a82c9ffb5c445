//! Simulation and verification toolkit for FIN trap processes on resistance
//! spaces: random trap environments, quenched heat kernels, exit times and
//! scaling fits.

pub mod backend;
pub mod environment;
pub mod error;
pub mod network;
pub mod rng;
pub mod scaling;
pub mod space;
pub mod stable;
pub mod stats;
pub mod volume;
pub mod walker;

pub use error::{Error, Result};
