//! Evolution strategies whose search distribution is a NICE flow on top of a
//! Gaussian latent.
//!
//! Each generation samples a population through the flow, updates the latent
//! Gaussian with a standard ES step (xNES or PGES), then fits the coupling
//! layers to an importance-weighted objective with an adaptive KL penalty.
//! See [`driver::run`] for the full loop.

pub mod driver;
pub mod error;
pub mod es;
pub mod flow;
pub mod latent;
pub mod mlp;
pub mod objectives;
pub mod record;

pub use error::{Error, Result};
pub use flow::{Checkpoint, CouplingLayer, FlowConfig, FlowParams};
pub use latent::LatentParams;
pub use mlp::{GradientBundle, MlpParams};
