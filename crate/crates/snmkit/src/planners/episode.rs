use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::mcts::{mcts_plan, BeliefTreeNode, MctsConfig};
use super::mhfr::{mhfr_plan, MhfrConfig, NominalTrajectory};
use crate::models::CarModel;
use crate::pomdp::{belief_moments_on, belief_update_or_prior, ParticleBelief, PomdpModel};
use crate::rng::{purpose, stream, SimRng};
use crate::snm::{approximate_snm, SnmLookupTable};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// The MCTS belief-tree search.
    General,
    /// MHFR on the linearized model.
    Linearized,
    /// A fixed action sequence (tests and baselines).
    Scripted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub solver: Solver,
    /// Local SNM estimate, when the planner computed one.
    pub psi_hat: Option<f64>,
    /// Time spent on the SNM lookup.
    pub approx_time: Duration,
    /// MHFR found no goal-reaching trajectory this step.
    pub no_goal_found: bool,
}

impl StepDiagnostics {
    fn new(solver: Solver) -> Self {
        StepDiagnostics {
            solver,
            psi_hat: None,
            approx_time: Duration::ZERO,
            no_goal_found: false,
        }
    }
}

/// Chooses an action for the current belief inside a closed-loop episode.
pub trait Planner {
    fn plan(&mut self, belief: &ParticleBelief, rng: &mut SimRng) -> Result<(Vec<f64>, StepDiagnostics)>;

    /// Told about the executed action and the observation that followed.
    fn observe(&mut self, _action: &[f64], _obs: &[f64]) {}
}

/// Replays a fixed action list, then repeats its last action.
#[derive(Clone, Debug)]
pub struct ScriptedPlanner {
    actions: Vec<Vec<f64>>,
    next: usize,
}

impl ScriptedPlanner {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        assert!(!actions.is_empty(), "a script needs at least one action");
        ScriptedPlanner { actions, next: 0 }
    }
}

impl Planner for ScriptedPlanner {
    fn plan(&mut self, _belief: &ParticleBelief, _rng: &mut SimRng) -> Result<(Vec<f64>, StepDiagnostics)> {
        let a = self.actions[self.next.min(self.actions.len() - 1)].clone();
        self.next += 1;
        Ok((a, StepDiagnostics::new(Solver::Scripted)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Mcts,
    Mhfr,
    Snm,
}

/// A planner entry of a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerSpec {
    #[serde(rename = "type")]
    pub kind: PlannerKind,
    /// MCTS episodes per step; for a pure MHFR planner, RRT iterations per tree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_trees: Option<usize>,
    /// SNM threshold μ; MHFR is used when Ψ̂ < μ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Extra seed component, so two entries of the same type can differ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub mcts: MctsConfig,
    #[serde(default)]
    pub mhfr: MhfrConfig,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

impl PlannerSpec {
    pub fn new(kind: PlannerKind) -> Self {
        PlannerSpec {
            kind,
            budget: None,
            k_trees: None,
            threshold: None,
            seed: None,
            label: None,
            mcts: MctsConfig::default(),
            mhfr: MhfrConfig::default(),
        }
    }

    pub fn mcts_config(&self) -> MctsConfig {
        let mut c = self.mcts.clone();
        if let (Some(b), PlannerKind::Mcts | PlannerKind::Snm) = (self.budget, self.kind) {
            c.budget = b;
        }
        c
    }

    pub fn mhfr_config(&self) -> MhfrConfig {
        let mut c = self.mhfr.clone();
        if let Some(k) = self.k_trees {
            c.k_trees = k;
        }
        if let (Some(b), PlannerKind::Mhfr) = (self.budget, self.kind) {
            c.iterations = b;
        }
        c
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(DEFAULT_THRESHOLD)
    }

    /// Name used in result rows.
    pub fn id(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.kind {
            PlannerKind::Mcts => "mcts".into(),
            PlannerKind::Mhfr => "mhfr".into(),
            PlannerKind::Snm => format!("snm@{}", self.threshold()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mcts = self.mcts_config();
        let mhfr = self.mhfr_config();
        if mcts.budget == 0 || mhfr.k_trees == 0 || mhfr.iterations == 0 {
            return Err(Error::InvalidScenario(format!(
                "planner {}: budgets must be positive",
                self.id()
            )));
        }
        if !self.threshold().is_finite() {
            return Err(Error::InvalidScenario(format!(
                "planner {}: threshold must be finite",
                self.id()
            )));
        }
        Ok(())
    }
}

/// Solver state carried from one step to the next.
#[derive(Clone, Debug, Default)]
pub struct RetainedState {
    pub tree: Option<BeliefTreeNode>,
    pub trajectory: Option<NominalTrajectory>,
}

fn run_mcts(
    belief: &ParticleBelief,
    model: &CarModel,
    cfg: &MctsConfig,
    retained: &mut RetainedState,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let out = mcts_plan(belief, model, cfg, retained.tree.take(), rng)?;
    retained.tree = Some(out.tree);
    retained.trajectory = None;
    Ok(out.action)
}

fn run_mhfr(
    belief: &ParticleBelief,
    model: &CarModel,
    cfg: &MhfrConfig,
    retained: &mut RetainedState,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, bool)> {
    let gb = belief_moments_on(belief, model.state_space());
    let out = mhfr_plan(&gb, model, cfg, retained.trajectory.as_ref(), rng)?;
    retained.trajectory = Some(out.trajectory);
    retained.tree = None;
    Ok((out.action, out.no_goal_found))
}

/// One step of the switching planner: look up Ψ̂ for the belief and use MHFR
/// when Ψ̂ < `threshold`, the general solver otherwise.
#[allow(clippy::too_many_arguments)]
pub fn snm_planner_step(
    belief: &ParticleBelief,
    model: &CarModel,
    table: &SnmLookupTable,
    threshold: f64,
    mcts: &MctsConfig,
    mhfr: &MhfrConfig,
    retained: &mut RetainedState,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    let t0 = Instant::now();
    let psi = approximate_snm(belief, table);
    let approx_time = t0.elapsed();
    let mut diag = if psi < threshold {
        let (a, no_goal) = run_mhfr(belief, model, mhfr, retained, rng)?;
        let mut d = StepDiagnostics::new(Solver::Linearized);
        d.no_goal_found = no_goal;
        (a, d)
    } else {
        let a = run_mcts(belief, model, mcts, retained, rng)?;
        (a, StepDiagnostics::new(Solver::General))
    };
    diag.1.psi_hat = Some(psi);
    diag.1.approx_time = approx_time;
    Ok(diag)
}

/// A planner built from a [`PlannerSpec`] for the car model.
pub struct SnmPlanner<'a> {
    model: &'a CarModel,
    kind: PlannerKind,
    mcts: MctsConfig,
    mhfr: MhfrConfig,
    threshold: f64,
    table: Option<&'a SnmLookupTable>,
    retained: RetainedState,
}

impl<'a> SnmPlanner<'a> {
    pub fn new(model: &'a CarModel, spec: &PlannerSpec, table: Option<&'a SnmLookupTable>) -> Result<Self> {
        spec.validate()?;
        if spec.kind == PlannerKind::Snm && table.is_none() {
            return Err(Error::InvalidArgument("the SNM planner needs a lookup table".into()));
        }
        Ok(SnmPlanner {
            model,
            kind: spec.kind,
            mcts: spec.mcts_config(),
            mhfr: spec.mhfr_config(),
            threshold: spec.threshold(),
            table,
            retained: RetainedState::default(),
        })
    }
}

impl Planner for SnmPlanner<'_> {
    fn plan(&mut self, belief: &ParticleBelief, rng: &mut SimRng) -> Result<(Vec<f64>, StepDiagnostics)> {
        match self.kind {
            PlannerKind::Mcts => {
                let a = run_mcts(belief, self.model, &self.mcts, &mut self.retained, rng)?;
                Ok((a, StepDiagnostics::new(Solver::General)))
            }
            PlannerKind::Mhfr => {
                let (a, no_goal) = run_mhfr(belief, self.model, &self.mhfr, &mut self.retained, rng)?;
                let mut d = StepDiagnostics::new(Solver::Linearized);
                d.no_goal_found = no_goal;
                Ok((a, d))
            }
            PlannerKind::Snm => snm_planner_step(
                belief,
                self.model,
                self.table.expect("checked at construction"),
                self.threshold,
                &self.mcts,
                &self.mhfr,
                &mut self.retained,
                rng,
            ),
        }
    }

    fn observe(&mut self, action: &[f64], obs: &[f64]) {
        if let Some(tree) = self.retained.tree.take() {
            let idx = self.model.actions().iter().position(|a| a == action);
            self.retained.tree =
                idx.and_then(|i| tree.advance(i, obs, self.model.observation_space(), self.mcts.observation_bins));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Goal,
    Collision,
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub discounted_return: f64,
    pub steps: usize,
    pub outcome: Outcome,
    /// Steps whose motion hit an obstacle, including bounces.
    pub collisions: usize,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl EpisodeRecord {
    /// Steps planned by the general solver over all planned steps.
    pub fn general_fraction(&self) -> Option<f64> {
        if self.diagnostics.is_empty() {
            return None;
        }
        let general = self.diagnostics.iter().filter(|d| d.solver == Solver::General).count();
        Some(general as f64 / self.diagnostics.len() as f64)
    }
}

/// Closed-loop run: plan on the particle belief, execute on the hidden
/// state, observe, update the belief with `particles` particles, repeat for
/// at most `max_steps` steps.
///
/// Each purpose (true world, planner, filter, start state) draws from its own
/// stream derived from `seed`, and the planner and filter streams are reset
/// every step.
pub fn run_episode_with_planner<M: PomdpModel + ?Sized, P: Planner + ?Sized>(
    model: &M,
    planner: &mut P,
    b0: &ParticleBelief,
    seed: u64,
    max_steps: usize,
    particles: usize,
) -> Result<EpisodeRecord> {
    let mut record = EpisodeRecord {
        discounted_return: 0.0,
        steps: 0,
        outcome: Outcome::Timeout,
        collisions: 0,
        diagnostics: Vec::new(),
    };
    if max_steps == 0 {
        return Ok(record);
    }
    let gamma = model.discount();
    let mut world = stream(seed, &[purpose::WORLD]);
    let mut state = b0.sample(&mut stream(seed, &[purpose::START])).to_vec();
    let mut belief = b0.clone();
    let mut discount = 1.0;
    for t in 0..max_steps {
        let mut planner_rng = stream(seed, &[purpose::PLANNER, t as u64]);
        let (action, diag) = planner.plan(&belief, &mut planner_rng)?;
        record.diagnostics.push(diag);
        let (next, step) = model.sample_transition(&state, &action, &mut world);
        let obs = model.sample_observation(&next, &action, &mut world);
        record.discounted_return += discount * model.reward(&state, &action, &next, step);
        discount *= gamma;
        record.steps += 1;
        record.collisions += usize::from(step.collided);
        if model.is_terminal(&next, step) {
            record.outcome = if step.absorbed {
                Outcome::Collision
            } else {
                Outcome::Goal
            };
            break;
        }
        state = next;
        planner.observe(&action, &obs);
        let mut filter_rng = stream(seed, &[purpose::FILTER, t as u64]);
        belief = belief_update_or_prior(&belief, &action, &obs, model, particles, &mut filter_rng).0;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CarVariant, Environment, NoiseSpec, START};
    use crate::snm::{TableMetadata, TableRow, TABLE_FORMAT_VERSION};

    fn flat_table(model: &CarModel, psi: f64) -> SnmLookupTable {
        let meta = TableMetadata {
            format_version: TABLE_FORMAT_VERSION,
            model: "flat".into(),
            e_t: 0.0,
            e_z: 0.0,
            node_budget: 2,
            samples: 1,
            bins: 5,
            actions: model.actions().to_vec(),
            seed: 0,
            content_hash: String::new(),
        };
        let rows = [START.to_vec(), vec![0.5, 0.5, 0.0, 0.1]]
            .into_iter()
            .map(|state| TableRow {
                state,
                psi_t: psi / 2.0,
                psi_z: psi / 2.0,
                mong_t: None,
                mong_z: None,
            })
            .collect();
        SnmLookupTable::new(meta, model.state_space().clone(), rows).unwrap()
    }

    fn car(e: f64, env: Environment) -> CarModel {
        CarModel::new(env, NoiseSpec::uniform(e), CarVariant::default())
    }

    fn small_budgets() -> (MctsConfig, MhfrConfig) {
        (
            MctsConfig {
                budget: 30,
                max_depth: 5,
                ..Default::default()
            },
            MhfrConfig {
                k_trees: 1,
                iterations: 50,
                ..Default::default()
            },
        )
    }

    #[test]
    fn zero_table_always_dispatches_mhfr_and_ones_always_mcts() {
        let m = car(0.038, Environment::maze());
        let b = ParticleBelief::point(&START, 20);
        let (mc, mh) = small_budgets();
        for (psi, mu, expected) in [
            (0.0, 0.5, Solver::Linearized),
            (0.0, 1e-9, Solver::Linearized),
            (1.0, 0.5, Solver::General),
        ] {
            let table = flat_table(&m, psi);
            let mut retained = RetainedState::default();
            let (_, d) = snm_planner_step(&b, &m, &table, mu, &mc, &mh, &mut retained, &mut stream(1, &[])).unwrap();
            assert_eq!(d.solver, expected);
            assert_eq!(d.psi_hat, Some(psi));
        }
    }

    #[test]
    fn dispatch_flips_exactly_at_the_estimate() {
        let m = car(0.038, Environment::maze());
        let b = ParticleBelief::point(&START, 5);
        let table = flat_table(&m, 0.3);
        let psi = approximate_snm(&b, &table);
        let (mc, mh) = small_budgets();
        let solver = |mu: f64| {
            let mut r = RetainedState::default();
            snm_planner_step(&b, &m, &table, mu, &mc, &mh, &mut r, &mut stream(2, &[]))
                .unwrap()
                .1
                .solver
        };
        assert_eq!(solver(psi), Solver::General);
        assert_eq!(solver(psi.next_up()), Solver::Linearized);
        assert_eq!(solver(psi.next_down()), Solver::General);
    }

    #[test]
    fn zero_steps_give_an_empty_record() {
        let m = car(0.0, Environment::empty());
        let mut p = ScriptedPlanner::new(vec![vec![1.0, 0.0]]);
        let r = run_episode_with_planner(&m, &mut p, &ParticleBelief::point(&START, 1), 1, 0, 10).unwrap();
        assert_eq!(r.discounted_return, 0.0);
        assert_eq!(r.steps, 0);
        assert!(r.diagnostics.is_empty());
    }

    #[test]
    fn scripted_goal_run_has_the_expected_return() {
        let m = car(0.0, Environment::empty());
        let start = [0.7, 0.4, std::f64::consts::FRAC_PI_2, 0.0];
        let script = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        // Number of steps until the goal, from the noise-free dynamics.
        let mut s = start.to_vec();
        let mut t = 0;
        while !m.in_goal(&s) {
            s = m.nominal_transition(&s, &script[t.min(1)]).0;
            t += 1;
        }
        let g = m.discount();
        let expected = g.powi(t as i32 - 1) * 1000.0 - (0..t - 1).map(|j| g.powi(j as i32)).sum::<f64>();
        let mut p = ScriptedPlanner::new(script);
        let r = run_episode_with_planner(&m, &mut p, &ParticleBelief::point(&start, 4), 3, 50, 4).unwrap();
        assert_eq!(r.outcome, Outcome::Goal);
        assert_eq!(r.steps, t);
        assert!(
            (r.discounted_return - expected).abs() < 1e-9,
            "{} vs {expected}",
            r.discounted_return
        );
    }

    #[test]
    fn ramming_a_wall_ends_in_collision() {
        let m = car(0.0, Environment::maze());
        let start = [0.7, -0.1, std::f64::consts::FRAC_PI_2, 0.0];
        let mut p = ScriptedPlanner::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        let r = run_episode_with_planner(&m, &mut p, &ParticleBelief::point(&start, 4), 4, 50, 4).unwrap();
        assert_eq!(r.outcome, Outcome::Collision);
        let g = m.discount();
        let t = r.steps;
        let expected = -500.0 * g.powi(t as i32 - 1) - (0..t - 1).map(|j| g.powi(j as i32)).sum::<f64>();
        assert!((r.discounted_return - expected).abs() < 1e-9);
    }

    #[test]
    fn mixed_dispatch_on_a_two_level_table() {
        // Ψ̂ is low near the start and high elsewhere, so a run that moves
        // away from the start switches from MHFR to MCTS.
        let m = car(0.01, Environment::empty());
        let mut table = flat_table(&m, 0.0);
        let rows: Vec<TableRow> = table
            .rows()
            .iter()
            .cloned()
            .zip([0.0, 1.0])
            .map(|(mut r, psi)| {
                r.psi_t = psi;
                r
            })
            .collect();
        table = SnmLookupTable::new(table.metadata().clone(), table.space().clone(), rows).unwrap();
        let mut spec = PlannerSpec::new(PlannerKind::Snm);
        spec.threshold = Some(0.5);
        spec.mcts = MctsConfig {
            budget: 50,
            max_depth: 5,
            ..Default::default()
        };
        spec.mhfr = MhfrConfig {
            k_trees: 2,
            iterations: 300,
            ..Default::default()
        };
        let mut p = SnmPlanner::new(&m, &spec, Some(&table)).unwrap();
        let r = run_episode_with_planner(&m, &mut p, &ParticleBelief::point(&START, 50), 5, 40, 50).unwrap();
        let f = r.general_fraction().unwrap();
        assert!(r.diagnostics[0].solver == Solver::Linearized);
        assert!(f > 0.0 && f < 1.0, "general fraction {f}");
    }

    #[test]
    fn episodes_are_reproducible() {
        let m = car(0.038, Environment::maze());
        let mut spec = PlannerSpec::new(PlannerKind::Mcts);
        spec.budget = Some(100);
        let run = || {
            let mut p = SnmPlanner::new(&m, &spec, None).unwrap();
            run_episode_with_planner(&m, &mut p, &ParticleBelief::point(&START, 100), 9, 10, 100).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.discounted_return, b.discounted_return);
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn snm_planner_requires_a_table() {
        let m = car(0.038, Environment::maze());
        assert!(SnmPlanner::new(&m, &PlannerSpec::new(PlannerKind::Snm), None).is_err());
    }

    #[test]
    fn planner_spec_json() {
        let spec: PlannerSpec =
            serde_json::from_str(r#"{"type":"snm","budget":200,"k_trees":3,"threshold":0.4}"#).unwrap();
        assert_eq!(spec.kind, PlannerKind::Snm);
        assert_eq!(spec.mcts_config().budget, 200);
        assert_eq!(spec.mhfr_config().k_trees, 3);
        assert_eq!(spec.id(), "snm@0.4");
    }
}
