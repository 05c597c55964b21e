use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pomdp::{ParticleBelief, PomdpModel, Space};
use crate::rng::SimRng;
use crate::{Error, Result};

/// UCB1 exploration constant, on the scale of the car rewards.
pub const DEFAULT_EXPLORATION: f64 = 1000.0;
/// Equal-width bins per observation dimension used to key child nodes.
pub const OBSERVATION_BINS: usize = 5;
/// Particles a node keeps from the episodes that pass through it.
const NODE_PARTICLE_CAP: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    /// Episodes simulated per planning call.
    pub budget: usize,
    /// Depth cap of tree descent plus rollout, counted from the root.
    pub max_depth: usize,
    pub exploration: f64,
    pub observation_bins: usize,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            budget: 1000,
            max_depth: 25,
            exploration: DEFAULT_EXPLORATION,
            observation_bins: OBSERVATION_BINS,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActionStats {
    pub visits: u64,
    pub total: f64,
    pub total_sq: f64,
}

impl ActionStats {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total / self.visits as f64
        }
    }

    /// Standard error of [`mean`](Self::mean).
    pub fn std_error(&self) -> f64 {
        if self.visits < 2 {
            return f64::INFINITY;
        }
        let n = self.visits as f64;
        let var = ((self.total_sq - self.total * self.total / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    fn record(&mut self, q: f64) {
        self.visits += 1;
        self.total += q;
        self.total_sq += q * q;
    }
}

/// Child key: action index and the binned observation.
type EdgeKey = (usize, Vec<u16>);

/// A belief node: the states that reached it, its visit statistics and its
/// children keyed by (action, observation bin).
#[derive(Clone, Debug, Default)]
pub struct BeliefTreeNode {
    pub particles: Vec<Vec<f64>>,
    pub visits: u64,
    pub stats: Vec<ActionStats>,
    children: BTreeMap<EdgeKey, BeliefTreeNode>,
}

fn observation_key(space: &Space, o: &[f64], bins: usize) -> Vec<u16> {
    let (u, _) = space.normalize(o);
    u.iter()
        .map(|x| ((x * bins as f64).floor().max(0.0) as usize).min(bins - 1) as u16)
        .collect()
}

impl BeliefTreeNode {
    fn new(num_actions: usize) -> Self {
        BeliefTreeNode {
            stats: vec![ActionStats::default(); num_actions],
            ..Default::default()
        }
    }

    pub fn num_children(&self) -> usize {
        self.children.len()
    }

    /// Total number of nodes in this subtree.
    pub fn size(&self) -> usize {
        1 + self.children.values().map(BeliefTreeNode::size).sum::<usize>()
    }

    /// Index of the action with the best mean among visited ones.
    pub fn best_action(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, st) in self.stats.iter().enumerate() {
            if st.visits > 0 && best.is_none_or(|b| st.mean() > self.stats[b].mean()) {
                best = Some(i);
            }
        }
        best
    }

    /// The subtree reached by executing `action` and observing `obs`.
    pub fn advance(mut self, action: usize, obs: &[f64], space: &Space, bins: usize) -> Option<BeliefTreeNode> {
        self.children.remove(&(action, observation_key(space, obs, bins)))
    }

    fn ucb_action(&self, c: f64) -> usize {
        if let Some(untried) = self.stats.iter().position(|s| s.visits == 0) {
            return untried;
        }
        let log_n = (self.visits.max(1) as f64).ln();
        let score = |s: &ActionStats| s.mean() + c * (log_n / s.visits as f64).sqrt();
        let mut best = 0;
        for i in 1..self.stats.len() {
            if score(&self.stats[i]) > score(&self.stats[best]) {
                best = i;
            }
        }
        best
    }

    fn simulate<M: PomdpModel + ?Sized>(
        &mut self,
        model: &M,
        s: &[f64],
        depth: usize,
        cfg: &MctsConfig,
        rng: &mut SimRng,
    ) -> f64 {
        if depth >= cfg.max_depth {
            return 0.0;
        }
        let a = self.ucb_action(cfg.exploration);
        let action = &model.actions()[a];
        let (next, step) = model.sample_transition(s, action, rng);
        let reward = model.reward(s, action, &next, step);
        let q = if model.is_terminal(&next, step) {
            reward
        } else {
            let o = model.sample_observation(&next, action, rng);
            let key = (a, observation_key(model.observation_space(), &o, cfg.observation_bins));
            let tail = match self.children.get_mut(&key) {
                Some(child) => {
                    if child.particles.len() < NODE_PARTICLE_CAP {
                        child.particles.push(next.clone());
                    }
                    child.simulate(model, &next, depth + 1, cfg, rng)
                }
                None => {
                    let mut child = BeliefTreeNode::new(model.actions().len());
                    child.particles.push(next.clone());
                    self.children.insert(key, child);
                    rollout(model, next, depth + 1, cfg.max_depth, rng)
                }
            };
            reward + model.discount() * tail
        };
        self.visits += 1;
        self.stats[a].record(q);
        q
    }
}

/// Discounted return of uniformly random actions from `s` until a terminal
/// state or the depth cap.
fn rollout<M: PomdpModel + ?Sized>(
    model: &M,
    mut s: Vec<f64>,
    mut depth: usize,
    max_depth: usize,
    rng: &mut SimRng,
) -> f64 {
    let gamma = model.discount();
    let mut ret = 0.0;
    let mut discount = 1.0;
    while depth < max_depth {
        let action = &model.actions()[rng.random_range(0..model.actions().len())];
        let (next, step) = model.sample_transition(&s, action, rng);
        ret += discount * model.reward(&s, action, &next, step);
        if model.is_terminal(&next, step) {
            break;
        }
        discount *= gamma;
        s = next;
        depth += 1;
    }
    ret
}

#[derive(Clone, Debug)]
pub struct MctsOutcome {
    pub action_index: usize,
    pub action: Vec<f64>,
    /// Mean return of the chosen root action.
    pub value: f64,
    pub tree: BeliefTreeNode,
}

/// Run `cfg.budget` episodes from states drawn out of `belief`, growing
/// `tree` (or a fresh root), and return the best root action.
pub fn mcts_plan<M: PomdpModel + ?Sized>(
    belief: &ParticleBelief,
    model: &M,
    cfg: &MctsConfig,
    tree: Option<BeliefTreeNode>,
    rng: &mut SimRng,
) -> Result<MctsOutcome> {
    if belief.is_empty() {
        return Err(Error::InvalidArgument("cannot plan from an empty belief".into()));
    }
    if cfg.budget == 0 || cfg.observation_bins == 0 {
        return Err(Error::InvalidArgument(
            "budget and observation bins must be positive".into(),
        ));
    }
    let na = model.actions().len();
    let mut root = match tree {
        Some(t) if t.stats.len() == na => t,
        _ => BeliefTreeNode::new(na),
    };
    for _ in 0..cfg.budget {
        let s = belief.sample(rng).to_vec();
        root.simulate(model, &s, 0, cfg, rng);
    }
    root.particles = belief.particles().to_vec();
    let action_index = root.best_action().unwrap_or(0);
    Ok(MctsOutcome {
        action_index,
        action: model.actions()[action_index].clone(),
        value: root.stats[action_index].mean(),
        tree: root,
    })
}
