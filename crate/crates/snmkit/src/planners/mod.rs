//! Online solvers: a general MCTS belief-tree search, the linearization-based
//! MHFR trajectory sampler, and the SNM planner that switches between them.

mod episode;
mod mcts;
mod mhfr;

pub use episode::{
    run_episode_with_planner, snm_planner_step, EpisodeRecord, Outcome, Planner, PlannerKind, PlannerSpec,
    RetainedState, ScriptedPlanner, SnmPlanner, Solver, StepDiagnostics, DEFAULT_THRESHOLD,
};
pub use mcts::{
    mcts_plan, ActionStats, BeliefTreeNode, MctsConfig, MctsOutcome, DEFAULT_EXPLORATION, OBSERVATION_BINS,
};
pub use mhfr::{
    collision_probability, goal_probability, mhfr_plan, score_trajectory, MhfrConfig, MhfrOutcome, NominalTrajectory,
};
