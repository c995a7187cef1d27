pub mod arch;
pub mod autodiff;
mod binio;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod tensor;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
