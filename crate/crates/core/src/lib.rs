//! Cooperative recommendations between a content provider and a CDN.
pub mod ccr;
pub mod cli;
pub mod ccrcache;
pub mod dcr;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod projection;
pub mod scenario;

mod matrix_serde;
mod spg;

pub use error::{Error, Result};
