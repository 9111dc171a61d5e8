pub mod analysis;
pub mod dataset;
pub mod env;
pub mod error;
pub mod learner;
pub mod nn;
pub mod planner;

mod binio;

pub use error::{Error, Result};
