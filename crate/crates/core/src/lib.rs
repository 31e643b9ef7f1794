//! Multi-source short-term PV forecasting core.
//!
//! Clear-sky stationarization, per-horizon autoregressive models with
//! spatio-temporal and exogenous (satellite, NWP) regressors, LASSO
//! coordinate descent, RMSE/skill-score evaluation, and a synthetic scene
//! generator. The crate is `no_std` and only needs `alloc`; file formats and
//! the command line live in the `pvfc` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bundle;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geo_solar;
pub mod ingestion;
pub mod linalg;
pub mod math;
pub mod models;
pub mod regression;
pub mod series;
pub mod stationarize;
pub mod synthgen;
pub mod time;

pub use error::{Error, Result};
pub use series::{NativeSeries, TimeSeries15, Unit};
pub use time::{TimeSpan, Timestamp, STEP_SECONDS};
