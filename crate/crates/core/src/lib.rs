pub mod arch;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod preprocess;
pub mod volume;

pub use error::{Error, Result};
