// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod fit;
pub mod io;
pub mod landmarks;
pub mod masks;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod pose;
pub mod presets;
pub mod retarget;

pub use error::{Error, Result};
