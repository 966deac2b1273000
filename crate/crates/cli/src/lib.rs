//! File formats, synthetic test images and the command-line driver for
//! `svaseg-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod phantom;
pub mod trace;
pub mod verify;

pub use error::{AppError, Result};
