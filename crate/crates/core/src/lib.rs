//! Few-shot adaptive gaze estimation at desk scale.
//!
//! The pipeline: a procedural synthetic-person generator renders labeled
//! eye-region patches; a disentangling transforming encoder-decoder (DT-ED)
//! learns a latent code split into appearance, gaze, and head factors with
//! explicit rotations applied to the latter two; a small gaze MLP on the gaze
//! sub-code is meta-trained (MAML) so it can be personalized to a new person
//! from `k ≤ 9` calibration samples; an evaluation harness compares methods
//! under a seeded, reproducible protocol.

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod latent;
pub mod losses;
pub mod metalearn;
pub mod network;
pub mod synthdata;

pub use error::{FazeError, Result};
