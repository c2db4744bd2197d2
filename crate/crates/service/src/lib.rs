//! Review service: serves ranked domain queues and calibration samples, records
//! reviewer verdicts in a durable log, and retrains the classifier from them.

pub mod config;
pub mod error;
pub mod http;
pub mod state;

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use http::{router, serve, TOKEN_HEADER};
pub use state::{bootstrap, bootstrap_from_run, Service};
