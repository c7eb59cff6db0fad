//! Two-source reinflection experiments on Spanish L-shaped stem patterns.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod fsio;
pub mod pipeline;
pub mod sampler;
pub mod seeds;
pub mod synth;
pub mod transducer;
pub mod tripler;

pub use error::{Error, Result};
pub use morphome_nn as nn;
