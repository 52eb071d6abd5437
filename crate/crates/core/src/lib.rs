pub mod algebra;
pub mod channel;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod moments;
pub mod optimizer;
pub mod oracle;

pub use error::{Error, Result};
