//! File formats, dataset loaders, the sweep runner and the command-line
//! interface for `ssdfa-core`.

pub mod cifar;
pub mod cli;
pub mod config;
pub mod csvout;
pub mod error;
pub mod formats;
pub mod idx;
pub mod settings;
pub mod sweep;

pub use error::{Error, Result};
