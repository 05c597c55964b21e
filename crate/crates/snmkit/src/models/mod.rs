//! The car-like robot POMDP and its planar environments.

mod car;
mod env;

pub use car::*;
pub use env::{Environment, Goal, Obstacle};
