//! Dynamic winding numbers and Chern numbers of two-band Bloch Hamiltonians.

pub mod chern;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod spectral;
pub mod sweep;
pub mod winding;

pub use error::{Error, Result};
