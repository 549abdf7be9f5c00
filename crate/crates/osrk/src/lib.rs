//! File formats, data loading, reports and the command-line front end for
//! `osrk-core`.

mod binio;
pub mod bank_file;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod fsio;
pub mod manifest;
pub mod mstar;
pub mod report;

pub use error::{Error, FormatError, MstarError, Result};
