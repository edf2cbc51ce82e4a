//! Physics-guided unrolled MRI reconstruction with conventional and
//! multi-mask supervised training.

pub mod baseline;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod model;
pub mod physics;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
