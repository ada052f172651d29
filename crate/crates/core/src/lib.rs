//! Physical activity level (PAL) assessment from wearable heart-rate, step
//! and wrist-motion logs, built on stigmergic receptive fields (SRFs).
//!
//! Signals are resampled, normalized and cut into windows ([`signal`]).
//! Each window is turned into a pheromone trail and compared with trained
//! archetype trails ([`srf`]); a bank of such fields forms a perceptron per
//! sensor, whose outputs are fused linearly into a window PAL ([`pipeline`]).
//! Field parameters are found by differential evolution ([`de`],
//! [`training`]) on synthetic archetype signals ([`archetype`]).

pub mod archetype;
pub mod de;
pub mod error;
pub mod fusion;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod srf;
pub mod training;

pub use error::{Error, Result};
