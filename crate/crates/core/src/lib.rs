pub mod bitio;
pub mod calibration;
pub mod cli;
pub mod codec;
pub mod colormap;
pub mod dct;
pub mod error;
pub mod guidance;
pub mod io;
pub mod latentspace;
pub mod oracle;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result, StreamError};
