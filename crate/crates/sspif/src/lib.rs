//! File formats, the method registry and the `sspif` command-line tool on top
//! of [`sspif_core`].

pub mod cli;
pub mod config;
mod error;
pub mod methodfile;
pub mod output;
pub mod registry;

pub use error::{Error, Result};
