//! Command-line driver and JSON-over-HTTP service for `pap-core`.

pub mod app;
pub mod config;
pub mod error;
pub mod ops;
pub mod service;

pub use app::run;
pub use error::{AppError, ErrorKind};
