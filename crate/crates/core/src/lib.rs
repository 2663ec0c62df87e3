//! Desk-scale laboratory for video-context spatial reasoning: a procedural
//! 2.5D world with an analytically invertible renderer, a curation pipeline
//! for grounding/navigation clips, a pixel-space diffusion transformer trained
//! with flow matching, joint context+instruction classifier-free guidance, and
//! point-cloud spatial metrics.

pub mod error;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
