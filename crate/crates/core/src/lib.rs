pub mod error;
pub mod functionals;
pub mod localtime;
pub mod mollify;
pub mod paths;
pub mod simulate;
pub mod suite;
pub mod verify;

pub use error::{Error, Result};
