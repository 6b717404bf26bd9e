pub mod bptt;
pub mod cells;
pub mod error;
pub mod esn;
pub mod evalsearch;
pub mod narx;
pub mod numerics;
pub mod timeseries;

pub use error::{Error, Result};
