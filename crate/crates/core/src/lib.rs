//! Numerics for linear fractional backward SPDEs and fractional Zakai
//! filtering with partially observed control.

pub mod error;
pub mod grid;
pub mod registry;
pub mod sum;

pub use error::{Error, Result};
pub mod fraclap;
pub mod kernel;
pub mod levy;
pub mod bspde;
pub mod verify;
pub mod zakai;
mod lsq;
