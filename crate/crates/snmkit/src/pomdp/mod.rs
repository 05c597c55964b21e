//! POMDP abstraction, beliefs, particle filtering, episode simulation and the
//! exact finite-POMDP oracle.

mod belief;
mod discrete;
mod linear;
mod model;
mod space;

pub use belief::{
    belief_moments, belief_moments_on, belief_update_or_prior, belief_update_pf, simulate_episode, systematic_resample,
    DegenerateUpdate, Episode, GaussianBelief, ParticleBelief, Policy, TraceStep,
};
pub use discrete::{
    alpha_gap_bound, alpha_vector, check_bounds, exact_alpha, exact_optimal_value, exact_snm, truncation_term, tv_rows,
    value_loss_bound, BoundCheck, ConditionalPlan, DiscretePomdp, Labels, PlanSet, DEFAULT_PLAN_CAP,
};
pub use linear::{gaussian_density, LinearGaussianModel};
pub use model::{MotionJacobians, PomdpModel, SensorJacobians, Step};
pub use space::{angle_diff, wrap_angle, Space};
