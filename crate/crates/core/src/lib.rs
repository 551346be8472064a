pub mod cli;
pub mod error;
pub mod evaluator;
pub mod filter;
pub mod io;
pub mod layers;
pub mod net;
pub mod registry;
pub mod rppg;
pub mod spectrum;
pub mod synth;
pub mod trace;
pub mod trainer;

pub use error::{Error, ErrorCode, Result};
