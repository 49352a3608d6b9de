//! Files, checkpoints, the `nigmat` CLI and the HTTP session service built on
//! [`nigmat_core`].

pub mod checkpoint;
pub mod cli;
mod error;
pub mod fixture;
pub mod fras;
pub mod png8;
pub mod server;
pub mod session;

pub use error::{Error, Result};
pub use fras::{load_fras, save_fras};
pub use png8::save_png8;
