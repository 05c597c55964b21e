use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::linearize::kalman_track_trajectory;
use crate::models::{CarModel, Environment, COLLISION_REWARD, GOAL_REWARD, STEP_REWARD};
use crate::pomdp::{GaussianBelief, PomdpModel, Space};
use crate::rng::{stream, SimRng};
use crate::snm::{embed, sq_dist};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MhfrConfig {
    /// Independent RRTs grown per planning call.
    pub k_trees: usize,
    /// Sampling iterations per tree.
    pub iterations: usize,
    /// Longest trajectory, in steps, that a tree may grow.
    pub depth_cap: usize,
    /// Probability of steering toward the goal instead of a uniform sample.
    pub goal_bias: f64,
    /// Greedy steps taken per extension.
    pub extend_steps: usize,
}

impl Default for MhfrConfig {
    fn default() -> Self {
        MhfrConfig {
            k_trees: 4,
            iterations: 600,
            depth_cap: 80,
            goal_bias: 0.2,
            extend_steps: 4,
        }
    }
}

/// A noise-free state/action sequence; `states` has one more entry than
/// `actions`.
#[derive(Clone, Debug, PartialEq)]
pub struct NominalTrajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub reaches_goal: bool,
    pub score: f64,
}

impl NominalTrajectory {
    /// Follow `actions` from `start` under zero noise, stopping before a
    /// collision and at the first state inside the goal.
    pub fn replay(model: &CarModel, start: &[f64], actions: &[Vec<f64>]) -> Self {
        let mut states = vec![start.to_vec()];
        let mut kept = Vec::new();
        let mut reaches_goal = model.in_goal(start);
        for a in actions {
            if reaches_goal {
                break;
            }
            let (next, step) = model.nominal_transition(states.last().unwrap(), a);
            if step.collided {
                break;
            }
            reaches_goal = model.in_goal(&next);
            states.push(next);
            kept.push(a.clone());
        }
        NominalTrajectory {
            states,
            actions: kept,
            reaches_goal,
            score: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct MhfrOutcome {
    pub action: Vec<f64>,
    pub trajectory: NominalTrajectory,
    /// No candidate reached the goal; the trajectory ends closest to it.
    pub no_goal_found: bool,
    /// The belief mean was in collision and a nearby free state was used.
    pub start_adjusted: bool,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// P(lo ≤ X ≤ hi) for X ~ N(mu, sd²); a point mass when `sd` is zero.
fn interval_mass(n: &Normal, mu: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd <= 0.0 {
        return f64::from(u8::from(lo <= mu && mu <= hi));
    }
    (n.cdf((hi - mu) / sd) - n.cdf((lo - mu) / sd)).max(0.0)
}

/// Probability that the robot described by `b` overlaps an obstacle: each
/// box is inflated by the footprint at the mean heading and its Gaussian
/// mass is taken from the marginal CDFs; the per-box masses are summed and
/// clipped to one.
pub fn collision_probability(env: &Environment, b: &GaussianBelief) -> f64 {
    let n = std_normal();
    let (mx, my, th) = (b.mean[0], b.mean[1], b.mean[2]);
    let (sx, sy) = (b.cov[(0, 0)].max(0.0).sqrt(), b.cov[(1, 1)].max(0.0).sqrt());
    let (s, c) = th.sin_cos();
    let [hx, hy] = env.footprint;
    let ex = hx * c.abs() + hy * s.abs();
    let ey = hx * s.abs() + hy * c.abs();
    let total: f64 = env
        .obstacles
        .iter()
        .map(|o| {
            interval_mass(&n, mx, sx, o.min[0] - ex, o.max[0] + ex)
                * interval_mass(&n, my, sy, o.min[1] - ey, o.max[1] + ey)
        })
        .sum();
    total.min(1.0)
}

/// Probability that the position lies in the goal, with the disc replaced
/// by the square of equal area.
pub fn goal_probability(env: &Environment, b: &GaussianBelief) -> f64 {
    let n = std_normal();
    let half = 0.5 * env.goal.radius * std::f64::consts::PI.sqrt();
    let [gx, gy] = env.goal.center;
    let (sx, sy) = (b.cov[(0, 0)].max(0.0).sqrt(), b.cov[(1, 1)].max(0.0).sqrt());
    interval_mass(&n, b.mean[0], sx, gx - half, gx + half) * interval_mass(&n, b.mean[1], sy, gy - half, gy + half)
}

/// Expected discounted reward of executing `actions` open loop from
/// `belief`, with the belief tracked by a Kalman filter that receives the
/// maximum-likelihood observation at each step.
///
/// Mass that reaches the goal (or, with terminal collisions, an obstacle)
/// leaves the episode and stops collecting reward.
pub fn score_trajectory(model: &CarModel, belief: &GaussianBelief, actions: &[Vec<f64>]) -> Result<f64> {
    let beliefs = kalman_track_trajectory(belief, actions, model)?;
    let gamma = model.discount();
    let terminal_collisions = !model.variant.collision_dynamics;
    let mut alive = 1.0;
    let mut discount = 1.0;
    let mut score = 0.0;
    for b in &beliefs[1..] {
        let p_col = collision_probability(&model.env, b);
        let p_goal = goal_probability(&model.env, b).min(1.0 - p_col);
        let r = COLLISION_REWARD * p_col + GOAL_REWARD * p_goal + STEP_REWARD * (1.0 - p_col - p_goal);
        score += alive * discount * r;
        alive *= 1.0 - p_goal - if terminal_collisions { p_col } else { 0.0 };
        discount *= gamma;
        if alive <= 0.0 {
            break;
        }
    }
    Ok(score)
}

/// The belief mean, projected into the state bounds and, if it collides,
/// moved to the nearest free position found on rings of growing radius.
fn planning_start(model: &CarModel, belief: &GaussianBelief) -> Result<(Vec<f64>, bool)> {
    let mut mean: Vec<f64> = belief.mean.iter().copied().collect();
    model.state_space().project(&mut mean);
    if !model.collides(&mean) {
        return Ok((mean, false));
    }
    for ring in 1..=40 {
        let r = 0.005 * ring as f64;
        for k in 0..16 {
            let phi = std::f64::consts::TAU * k as f64 / 16.0;
            let mut s = mean.clone();
            s[0] += r * phi.cos();
            s[1] += r * phi.sin();
            model.state_space().project(&mut s);
            if !model.collides(&s) {
                return Ok((s, true));
            }
        }
    }
    Err(Error::InvalidScenario(format!(
        "no free state near belief mean {mean:?}"
    )))
}

struct Node {
    state: Vec<f64>,
    embedded: Vec<f64>,
    parent: usize,
    action: usize,
    depth: usize,
}

struct Tree {
    nodes: Vec<Node>,
    goal: Option<usize>,
}

impl Tree {
    fn branch(&self, model: &CarModel, leaf: usize) -> NominalTrajectory {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut i = leaf;
        while i != 0 {
            states.push(self.nodes[i].state.clone());
            actions.push(model.actions()[self.nodes[i].action].clone());
            i = self.nodes[i].parent;
        }
        states.push(self.nodes[0].state.clone());
        states.reverse();
        actions.reverse();
        let reaches_goal = model.in_goal(states.last().unwrap());
        NominalTrajectory {
            states,
            actions,
            reaches_goal,
            score: f64::NAN,
        }
    }

    fn closest_to_goal(&self, env: &Environment) -> usize {
        let [gx, gy] = env.goal.center;
        let d = |n: &Node| (n.state[0] - gx).powi(2) + (n.state[1] - gy).powi(2);
        let mut best = 0;
        for i in 1..self.nodes.len() {
            if d(&self.nodes[i]) < d(&self.nodes[best]) {
                best = i;
            }
        }
        best
    }
}

fn goal_target(space: &Space, env: &Environment, from: &[f64]) -> Vec<f64> {
    let [gx, gy] = env.goal.center;
    let heading = (gy - from[1]).atan2(gx - from[0]);
    embed(space, &[gx, gy, heading, space.upper[3]])
}

/// Grow one kinodynamic RRT from `root` under noise-free dynamics until a
/// node lands in the goal or the iterations run out.
fn grow_tree(model: &CarModel, root: &[f64], cfg: &MhfrConfig, rng: &mut SimRng) -> Tree {
    let space = model.state_space();
    let mut tree = Tree {
        nodes: vec![Node {
            state: root.to_vec(),
            embedded: embed(space, root),
            parent: 0,
            action: 0,
            depth: 0,
        }],
        goal: model.in_goal(root).then_some(0),
    };
    for _ in 0..cfg.iterations {
        if tree.goal.is_some() {
            break;
        }
        let toward_goal = rng.random::<f64>() < cfg.goal_bias;
        let uniform = (!toward_goal).then(|| embed(space, &space.sample(rng)));
        let target_for = |s: &[f64]| match &uniform {
            Some(t) => t.clone(),
            None => goal_target(space, &model.env, s),
        };
        let near = (0..tree.nodes.len())
            .filter(|&i| tree.nodes[i].depth < cfg.depth_cap)
            .min_by(|&i, &j| {
                let di = sq_dist(&tree.nodes[i].embedded, &target_for(&tree.nodes[i].state));
                let dj = sq_dist(&tree.nodes[j].embedded, &target_for(&tree.nodes[j].state));
                di.total_cmp(&dj)
            });
        let Some(mut cur) = near else { break };
        for _ in 0..cfg.extend_steps {
            let node = &tree.nodes[cur];
            if node.depth >= cfg.depth_cap {
                break;
            }
            let target = target_for(&node.state);
            let here = sq_dist(&node.embedded, &target);
            let mut best: Option<(f64, usize, Vec<f64>)> = None;
            for (ai, a) in model.actions().iter().enumerate() {
                let (next, step) = model.nominal_transition(&node.state, a);
                if step.collided {
                    continue;
                }
                let d = sq_dist(&embed(space, &next), &target);
                if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                    best = Some((d, ai, next));
                }
            }
            let Some((d, ai, next)) = best else { break };
            if d >= here || next == node.state {
                break;
            }
            let depth = node.depth + 1;
            let in_goal = model.in_goal(&next);
            tree.nodes.push(Node {
                embedded: embed(space, &next),
                state: next,
                parent: cur,
                action: ai,
                depth,
            });
            cur = tree.nodes.len() - 1;
            if in_goal {
                tree.goal = Some(cur);
                break;
            }
        }
    }
    tree
}

/// One MHFR planning call: sample `cfg.k_trees` RRT trajectories from the
/// belief mean, add the re-rooted `retained` trajectory, score all of them
/// with Kalman rollouts and return the first action of the best.
pub fn mhfr_plan(
    belief: &GaussianBelief,
    model: &CarModel,
    cfg: &MhfrConfig,
    retained: Option<&NominalTrajectory>,
    rng: &mut SimRng,
) -> Result<MhfrOutcome> {
    if cfg.k_trees == 0 {
        return Err(Error::InvalidArgument("MHFR needs at least one tree".into()));
    }
    let (start, start_adjusted) = planning_start(model, belief)?;
    let base: u64 = rng.random();
    let trees: Vec<Tree> = (0..cfg.k_trees)
        .into_par_iter()
        .map(|i| grow_tree(model, &start, cfg, &mut stream(base, &[i as u64])))
        .collect();

    let mut candidates: Vec<NominalTrajectory> = trees
        .iter()
        .filter_map(|t| t.goal.map(|g| t.branch(model, g)))
        .collect();
    if let Some(old) = retained {
        let tail = old.actions.get(1..).unwrap_or_default();
        let replayed = NominalTrajectory::replay(model, &start, tail);
        if replayed.reaches_goal && !replayed.is_empty() {
            candidates.push(replayed);
        }
    }
    let no_goal_found = candidates.is_empty();
    if no_goal_found {
        let [gx, gy] = model.env.goal.center;
        let gap = |t: &NominalTrajectory| {
            let s = t.states.last().unwrap();
            (s[0] - gx).powi(2) + (s[1] - gy).powi(2)
        };
        let mut best = trees[0].branch(model, trees[0].closest_to_goal(&model.env));
        for t in &trees[1..] {
            let b = t.branch(model, t.closest_to_goal(&model.env));
            if gap(&b) < gap(&best) {
                best = b;
            }
        }
        candidates.push(best);
    }
    let mut best: Option<NominalTrajectory> = None;
    for mut c in candidates {
        c.score = score_trajectory(model, belief, &c.actions)?;
        if best.as_ref().is_none_or(|b| c.score > b.score) {
            best = Some(c);
        }
    }
    let trajectory = best.expect("at least one candidate");
    // A trajectory of length zero means the start is already in the goal or
    // boxed in; holding still is the only sensible command then.
    let action = trajectory
        .actions
        .first()
        .cloned()
        .unwrap_or_else(|| stop_action(&start));
    Ok(MhfrOutcome {
        action,
        trajectory,
        no_goal_found,
        start_adjusted,
    })
}

/// The discrete action whose acceleration best cancels the current speed,
/// steering straight.
fn stop_action(s: &[f64]) -> Vec<f64> {
    let acc = if s[3] > 0.0 {
        -1.0
    } else if s[3] < 0.0 {
        1.0
    } else {
        0.0
    };
    vec![acc, 0.0]
}
