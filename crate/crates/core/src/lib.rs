pub mod cli;
pub mod deoc;
pub mod dfec;
pub mod error;
pub mod grid;
pub mod modal;
pub mod scenario;
mod serde_ext;
pub mod sim;

pub use error::{Error, Result};
