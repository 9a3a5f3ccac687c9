pub mod batch_bench;
pub mod contact;
pub mod diffcore;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod smoothops;
pub mod spline;
pub mod xpsq;

pub use error::{Error, Result};
