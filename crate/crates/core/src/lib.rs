pub mod error;
pub mod annotate;
pub mod math;
pub mod metrics;
pub mod model;
pub mod mstr;
pub mod nee;
pub mod par;
pub mod pipeline;
pub mod template;
pub mod tokenize;

pub use error::{Error, Result};
