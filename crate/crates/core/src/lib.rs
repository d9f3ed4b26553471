pub mod cli;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod postprocess;
pub mod priors;
pub mod sampler;
pub mod selfcheck;
pub mod trace;

pub use error::{Error, Result};
