pub mod autograd;
pub mod error;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub mod nets;
pub mod raster;
pub mod synth;
pub mod augment;
pub mod metrics;
pub mod losses;
pub mod train;
pub mod gan;
pub mod seg;
pub mod experiments;
pub mod config;
