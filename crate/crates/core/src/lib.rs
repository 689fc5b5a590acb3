pub mod analysis;
pub mod error;
pub mod integrate;
pub mod model;
pub mod potential;
pub mod scenarios;

pub use error::{Error, Result};
