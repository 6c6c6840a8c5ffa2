pub mod appendix;
pub mod config;
pub mod data;
pub mod draws;
pub mod dss;
pub mod error;
pub mod factor;
pub mod linalg;
pub mod pipeline;
pub mod portfolio;
pub mod ssvs;

pub use error::{Error, Result};
