pub mod cli;
pub mod corpus;
pub mod error;
pub mod hmtm;
pub mod selection;
pub mod synth;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
