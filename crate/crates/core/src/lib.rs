pub mod bnb;
pub mod config;
pub mod diving;
pub mod error;
pub mod eval;
pub mod expert;
pub mod generate;
pub mod graph;
pub mod io;
pub mod lns;
pub mod lp;
pub mod mip;
pub mod neural;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
