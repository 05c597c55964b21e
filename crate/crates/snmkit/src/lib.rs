//! Belief-space planning with a total-variation non-linearity measure.
//!
//! The crate estimates how far a POMDP's transition and observation models are
//! from their first-order linearizations, tabulates that estimate over
//! sampled states, and uses it online to switch between a general
//! particle-based tree search and a linearization-based trajectory planner.

pub mod error;
pub mod harness;
pub mod linearize;
pub mod models;
pub mod mong;
pub mod planners;
pub mod pomdp;
pub mod rng;
pub mod snm;

pub use error::{Error, Result};
