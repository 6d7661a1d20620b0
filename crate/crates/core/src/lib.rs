pub mod error;
pub mod exec;
pub mod exponents;
pub mod fields;
pub mod divsolve;
pub mod energy;
pub mod geometry;
pub mod poly;
pub mod pressure;
pub mod transforms;

pub use error::{Error, Result};
pub use exec::Exec;
