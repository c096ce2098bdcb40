pub mod encoder;
pub mod error;
pub mod eval;
pub mod fde;
pub mod graph;
pub mod io;
pub mod loss;
pub mod rng;
pub mod special;
pub mod train;

pub use error::{Error, Result};
