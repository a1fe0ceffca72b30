pub mod data;
pub mod error;
pub mod experiments;
pub mod gram;
pub mod kernel;
pub mod linalg;
pub mod lookup;
pub mod quadrature;
pub mod regression;
pub mod roots;
pub mod simulate;
pub mod special;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
