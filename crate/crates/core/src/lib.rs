pub mod cli;
pub mod data;
pub mod design;
pub mod emulator;
pub mod error;
pub mod front;
pub mod geo;
pub mod gp;
pub mod infer;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
