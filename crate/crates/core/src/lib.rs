pub mod assembly;
pub mod cell;
pub mod corrector;
pub mod error;
pub mod field;
pub mod grid;
pub mod parallel;
pub mod solver;
pub mod sparse;
pub mod spectral;
pub mod unfolding;

pub use error::{Error, Result};
