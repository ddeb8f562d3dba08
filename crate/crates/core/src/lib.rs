pub mod dots;
pub mod error;
pub mod format;
pub mod gabor;
pub mod geometry;
pub mod harness;
pub mod masking;
pub mod pipeline;
pub mod stats;
pub mod stimulus;

pub use error::{Error, Result};
