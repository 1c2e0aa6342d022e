pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod numcore;
pub mod training;

pub use error::{Error, Result};
