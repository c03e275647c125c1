pub mod baselines;
pub mod bic;
pub mod data;
pub mod drbm;
pub mod error;
pub mod eval;
pub mod kohonen;
pub mod pipeline;
pub mod rbm;
pub mod report;
pub mod seed;

pub use error::{Error, Result};
