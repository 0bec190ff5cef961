//! Split-flow decomposition of geometric flows on the flat torus.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod flows;
pub mod gauge;
pub mod grid;
pub mod metric;
pub mod monitors;
pub mod presets;
pub mod runner;
pub mod snapshot;
pub mod spinor;

pub use error::{Error, Result};
