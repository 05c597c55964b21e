//! Small finite POMDPs and their exact conditional-plan oracle.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PomdpModel, Space, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Either a count or a list of labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    Count(usize),
    Names(Vec<String>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Count(n) => *n,
            Labels::Names(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawDiscretePomdp {
    states: Labels,
    actions: Labels,
    observations: Labels,
    /// T[s][a][s′]
    #[serde(alias = "T")]
    transition: Vec<Vec<Vec<f64>>>,
    /// Z[s′][a][o]
    #[serde(alias = "Z")]
    observation: Vec<Vec<Vec<f64>>>,
    /// R[s][a]
    #[serde(alias = "R")]
    reward: Vec<Vec<f64>>,
    #[serde(alias = "gamma")]
    discount: f64,
    #[serde(alias = "b0", default, skip_serializing_if = "Option::is_none")]
    initial_belief: Option<Vec<f64>>,
}

/// A finite POMDP given by explicit tensors.
///
/// It also implements [`PomdpModel`] with one-element vectors holding the
/// state, action and observation indices, so the generic filters and
/// simulators can run on it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawDiscretePomdp", into = "RawDiscretePomdp")]
pub struct DiscretePomdp {
    raw: RawDiscretePomdp,
    state_space: Space,
    action_space: Space,
    observation_space: Space,
    actions: Vec<Vec<f64>>,
}

impl TryFrom<RawDiscretePomdp> for DiscretePomdp {
    type Error = Error;

    fn try_from(raw: RawDiscretePomdp) -> Result<Self> {
        let (ns, na, no) = (raw.states.len(), raw.actions.len(), raw.observations.len());
        let bad = |m: String| Err(Error::InvalidModel(m));
        if ns == 0 || na == 0 || no == 0 {
            return bad("states, actions and observations must be nonempty".into());
        }
        if !(raw.discount > 0.0 && raw.discount < 1.0) {
            return bad(format!("discount {} outside (0,1)", raw.discount));
        }
        let check_rows = |name: &str, t: &Vec<Vec<Vec<f64>>>, width: usize| -> Result<()> {
            if t.len() != ns || t.iter().any(|r| r.len() != na) {
                return Err(Error::InvalidModel(format!("{name} has wrong shape")));
            }
            for (i, per_a) in t.iter().enumerate() {
                for (a, row) in per_a.iter().enumerate() {
                    if row.len() != width || row.iter().any(|p| !(*p >= 0.0)) {
                        return Err(Error::InvalidModel(format!("{name}[{i}][{a}] malformed")));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidModel(format!("{name}[{i}][{a}] sums to {sum}, not 1")));
                    }
                }
            }
            Ok(())
        };
        check_rows("T", &raw.transition, ns)?;
        check_rows("Z", &raw.observation, no)?;
        if raw.reward.len() != ns || raw.reward.iter().any(|r| r.len() != na) {
            return bad("R has wrong shape".into());
        }
        if let Some(b) = &raw.initial_belief {
            if b.len() != ns || (b.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("initial belief must be a distribution over states".into());
            }
        }
        let idx_space = |n: usize| Space::new(vec![0.0], vec![(n.max(2) - 1) as f64]);
        Ok(DiscretePomdp {
            state_space: idx_space(ns),
            action_space: idx_space(na),
            observation_space: idx_space(no),
            actions: (0..na).map(|a| vec![a as f64]).collect(),
            raw,
        })
    }
}

impl From<DiscretePomdp> for RawDiscretePomdp {
    fn from(dp: DiscretePomdp) -> Self {
        dp.raw
    }
}

impl DiscretePomdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        observation: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        discount: f64,
    ) -> Result<Self> {
        let ns = transition.len();
        let na = reward.first().map_or(0, Vec::len);
        let no = observation.first().and_then(|r| r.first()).map_or(0, Vec::len);
        RawDiscretePomdp {
            states: Labels::Count(ns),
            actions: Labels::Count(na),
            observations: Labels::Count(no),
            transition,
            observation,
            reward,
            discount,
            initial_belief: None,
        }
        .try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            // Validation failures surface as serde errors; keep the message.
            if e.is_data() {
                Error::InvalidModel(format!("{}: {e}", path.display()))
            } else {
                Error::json(path, e)
            }
        })
    }

    pub fn num_states(&self) -> usize {
        self.raw.states.len()
    }
    pub fn num_actions(&self) -> usize {
        self.raw.actions.len()
    }
    pub fn num_observations(&self) -> usize {
        self.raw.observations.len()
    }
    pub fn t(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.raw.transition[s][a][s2]
    }
    pub fn z(&self, s2: usize, a: usize, o: usize) -> f64 {
        self.raw.observation[s2][a][o]
    }
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.raw.reward[s][a]
    }
    pub fn gamma(&self) -> f64 {
        self.raw.discount
    }
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.raw.transition[s][a]
    }
    pub fn observation_row(&self, s2: usize, a: usize) -> &[f64] {
        &self.raw.observation[s2][a]
    }

    /// Initial belief from the file, or uniform.
    pub fn initial_belief(&self) -> Vec<f64> {
        self.raw
            .initial_belief
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.num_states() as f64; self.num_states()])
    }

    /// R_m = max(|R_min|, R_max).
    pub fn reward_magnitude(&self) -> f64 {
        self.raw.reward.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Same model with replaced transition and observation tensors.
    pub fn with_tensors(&self, transition: Vec<Vec<Vec<f64>>>, observation: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.transition = transition;
        raw.observation = observation;
        raw.try_into()
    }

    /// Random instance with Dirichlet(1) rows and rewards uniform in
    /// [−reward_scale, reward_scale].
    pub fn random(ns: usize, na: usize, no: usize, reward_scale: f64, discount: f64, rng: &mut SimRng) -> Self {
        let t = (0..ns)
            .map(|_| (0..na).map(|_| random_simplex(ns, rng)).collect())
            .collect();
        let z = (0..ns)
            .map(|_| (0..na).map(|_| random_simplex(no, rng)).collect())
            .collect();
        let r = (0..ns)
            .map(|_| {
                (0..na)
                    .map(|_| reward_scale * (2.0 * rng.random::<f64>() - 1.0))
                    .collect()
            })
            .collect();
        Self::new(t, z, r, discount).expect("random instance is valid by construction")
    }

    /// Mix every row with a random distribution: row′ = (1−ε)·row + ε·d.
    /// Each row moves by at most ε in total variation.
    pub fn perturbed(&self, eps: f64, rng: &mut SimRng) -> Self {
        let mix = |rows: &Vec<Vec<Vec<f64>>>, rng: &mut SimRng| -> Vec<Vec<Vec<f64>>> {
            rows.iter()
                .map(|per_a| {
                    per_a
                        .iter()
                        .map(|row| {
                            let d = random_simplex(row.len(), rng);
                            let mut out: Vec<f64> =
                                row.iter().zip(&d).map(|(p, q)| (1.0 - eps) * p + eps * q).collect();
                            let sum: f64 = out.iter().sum();
                            out.iter_mut().for_each(|p| *p /= sum);
                            out
                        })
                        .collect()
                })
                .collect()
        };
        let t = mix(&self.raw.transition, rng);
        let z = mix(&self.raw.observation, rng);
        self.with_tensors(t, z)
            .expect("mixtures of distributions are distributions")
    }

    /// Tiger problem: listen (0), open left (1), open right (2); the tiger is
    /// behind door 0 or 1; hearing is 85% accurate.
    pub fn tiger(discount: f64) -> Self {
        let stay = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let reset = vec![0.5, 0.5];
        let t = (0..2)
            .map(|s| vec![stay[s].clone(), reset.clone(), reset.clone()])
            .collect();
        let z = (0..2)
            .map(|s| {
                let hear = if s == 0 { vec![0.85, 0.15] } else { vec![0.15, 0.85] };
                vec![hear, vec![0.5, 0.5], vec![0.5, 0.5]]
            })
            .collect();
        let r = vec![vec![-1.0, -100.0, 10.0], vec![-1.0, 10.0, -100.0]];
        Self::new(t, z, r, discount).unwrap()
    }

    /// Two states that never move, observed perfectly; zero reward.
    pub fn two_state_identity_sensor() -> Self {
        let t = vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]];
        let z = vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]];
        Self::new(t, z, vec![vec![0.0], vec![0.0]], 0.95).unwrap()
    }

    /// One absorbing state with a constant per-step reward.
    pub fn constant_reward(r: f64, discount: f64) -> Self {
        Self::new(vec![vec![vec![1.0]]], vec![vec![vec![1.0]]], vec![vec![r]], discount).unwrap()
    }
}

fn random_simplex(n: usize, rng: &mut SimRng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

impl PomdpModel for DiscretePomdp {
    fn state_space(&self) -> &Space {
        &self.state_space
    }
    fn action_space(&self) -> &Space {
        &self.action_space
    }
    fn observation_space(&self) -> &Space {
        &self.observation_space
    }
    fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }
    fn transition_noise_dim(&self) -> usize {
        1
    }
    fn observation_noise_dim(&self) -> usize {
        1
    }
    fn transition_noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / 12.0)
    }
    fn observation_noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / 12.0)
    }
    fn sample_transition_noise(&self, rng: &mut SimRng, v: &mut [f64]) {
        v[0] = rng.random();
    }
    fn sample_observation_noise(&self, rng: &mut SimRng, w: &mut [f64]) {
        w[0] = rng.random();
    }
    fn dynamics(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) {
        out[0] = inverse_cdf(self.transition_row(s[0] as usize, a[0] as usize), v[0]) as f64;
    }
    fn transition(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) -> Step {
        self.dynamics(s, a, v, out);
        Step::default()
    }
    fn observe(&self, s: &[f64], a: &[f64], w: &[f64], out: &mut [f64]) {
        out[0] = inverse_cdf(self.observation_row(s[0] as usize, a[0] as usize), w[0]) as f64;
    }
    fn observation_density(&self, s: &[f64], a: &[f64], o: &[f64]) -> f64 {
        self.z(s[0] as usize, a[0] as usize, o[0] as usize)
    }
    fn reward(&self, s: &[f64], a: &[f64], _next: &[f64], _step: Step) -> f64 {
        self.r(s[0] as usize, a[0] as usize)
    }
    fn is_terminal(&self, _s: &[f64], _step: Step) -> bool {
        false
    }
    fn discount(&self) -> f64 {
        self.gamma()
    }
}

/// A finite-depth policy tree: an action, then one sub-plan per observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionalPlan {
    pub action: usize,
    /// Empty for a depth-1 plan, otherwise one entry per observation index.
    pub next: Vec<ConditionalPlan>,
}

impl ConditionalPlan {
    pub fn leaf(action: usize) -> Self {
        ConditionalPlan {
            action,
            next: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.next.first().map_or(0, ConditionalPlan::depth)
    }

    /// The same action repeated regardless of observations.
    pub fn open_loop(action: usize, depth: usize, num_obs: usize) -> Self {
        if depth <= 1 {
            return Self::leaf(action);
        }
        let sub = Self::open_loop(action, depth - 1, num_obs);
        ConditionalPlan {
            action,
            next: vec![sub; num_obs],
        }
    }
}

/// α_σ(s) by direct recursion.
pub fn exact_alpha(dp: &DiscretePomdp, plan: &ConditionalPlan, s: usize) -> f64 {
    let a = plan.action;
    let mut v = dp.r(s, a);
    if plan.next.is_empty() || dp.gamma() == 0.0 {
        return v;
    }
    let mut future = 0.0;
    for s2 in 0..dp.num_states() {
        let p = dp.t(s, a, s2);
        if p == 0.0 {
            continue;
        }
        for (o, sub) in plan.next.iter().enumerate() {
            let q = dp.z(s2, a, o);
            if q != 0.0 {
                future += p * q * exact_alpha(dp, sub, s2);
            }
        }
    }
    v += dp.gamma() * future;
    v
}

pub fn alpha_vector(dp: &DiscretePomdp, plan: &ConditionalPlan) -> Vec<f64> {
    (0..dp.num_states()).map(|s| exact_alpha(dp, plan, s)).collect()
}

/// Default cap on the number of plans enumerated at the deepest level.
pub const DEFAULT_PLAN_CAP: usize = 2_000_000;

#[derive(Clone, Debug)]
struct PlanNode {
    action: usize,
    children: Vec<u32>,
}

/// Every conditional plan up to a depth, stored level by level with children
/// referencing the previous level.
#[derive(Clone, Debug)]
pub struct PlanSet {
    levels: Vec<Vec<PlanNode>>,
    num_obs: usize,
}

impl PlanSet {
    pub fn enumerate(na: usize, no: usize, depth: usize, cap: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("plan depth must be at least 1".into()));
        }
        let mut levels: Vec<Vec<PlanNode>> = vec![(0..na)
            .map(|a| PlanNode {
                action: a,
                children: Vec::new(),
            })
            .collect()];
        for d in 1..depth {
            let prev = levels[d - 1].len();
            let count = (prev as f64).powi(no as i32) * na as f64;
            if count > cap as f64 {
                return Err(Error::InstanceTooLarge(format!(
                    "{count:.3e} plans at depth {} exceeds the cap of {cap}",
                    d + 1
                )));
            }
            let mut level = Vec::with_capacity(count as usize);
            for a in 0..na {
                let mut idx = vec![0u32; no];
                loop {
                    level.push(PlanNode {
                        action: a,
                        children: idx.clone(),
                    });
                    // Odometer increment over observation branches.
                    let mut k = 0;
                    while k < no {
                        idx[k] += 1;
                        if (idx[k] as usize) < prev {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                    if k == no {
                        break;
                    }
                }
            }
            levels.push(level);
        }
        Ok(PlanSet { levels, num_obs: no })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Number of plans of the full depth.
    pub fn len(&self) -> usize {
        self.levels.last().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// α-vectors of every full-depth plan, flattened as [plan][state].
    pub fn alphas(&self, dp: &DiscretePomdp) -> Vec<f64> {
        let ns = dp.num_states();
        let gamma = dp.gamma();
        let mut prev: Vec<f64> = Vec::new();
        for (d, level) in self.levels.iter().enumerate() {
            let mut cur = vec![0.0; level.len() * ns];
            for (p, node) in level.iter().enumerate() {
                let a = node.action;
                for s in 0..ns {
                    let mut v = dp.r(s, a);
                    if d > 0 {
                        let mut future = 0.0;
                        for s2 in 0..ns {
                            let t = dp.t(s, a, s2);
                            if t == 0.0 {
                                continue;
                            }
                            let inner: f64 = node
                                .children
                                .iter()
                                .enumerate()
                                .map(|(o, &c)| dp.z(s2, a, o) * prev[c as usize * ns + s2])
                                .sum();
                            future += t * inner;
                        }
                        v += gamma * future;
                    }
                    cur[p * ns + s] = v;
                }
            }
            prev = cur;
        }
        prev
    }

    /// Rebuild plan `index` of the full depth as a tree.
    pub fn plan(&self, index: usize) -> ConditionalPlan {
        self.plan_at(self.levels.len() - 1, index)
    }

    fn plan_at(&self, level: usize, index: usize) -> ConditionalPlan {
        let node = &self.levels[level][index];
        ConditionalPlan {
            action: node.action,
            next: if level == 0 {
                Vec::new()
            } else {
                debug_assert_eq!(node.children.len(), self.num_obs);
                node.children
                    .iter()
                    .map(|&c| self.plan_at(level - 1, c as usize))
                    .collect()
            },
        }
    }
}

fn best_plan(alphas: &[f64], ns: usize, belief: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (p, alpha) in alphas.chunks(ns).enumerate() {
        let v: f64 = alpha.iter().zip(belief).map(|(a, b)| a * b).sum();
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

/// Optimal finite-horizon value by exhaustive plan enumeration.
pub fn exact_optimal_value(dp: &DiscretePomdp, belief: &[f64], depth: usize) -> Result<(f64, ConditionalPlan)> {
    if belief.len() != dp.num_states() {
        return Err(Error::InvalidArgument("belief length differs from state count".into()));
    }
    let plans = PlanSet::enumerate(dp.num_actions(), dp.num_observations(), depth, DEFAULT_PLAN_CAP)?;
    let alphas = plans.alphas(dp);
    let (idx, v) = best_plan(&alphas, dp.num_states(), belief);
    Ok((v, plans.plan(idx)))
}

/// Value-loss bound 4γR_m/(1−γ)²·Ψ for planning with a linearized model.
pub fn value_loss_bound(snm: f64, r_m: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(4.0 * gamma * r_m / (1.0 - gamma).powi(2) * snm)
}

/// Per-plan α-function gap bound 2γR_m/(1−γ)²·Ψ.
pub fn alpha_gap_bound(snm: f64, r_m: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(2.0 * gamma * r_m / (1.0 - gamma).powi(2) * snm)
}

/// Tail mass γᵈ·R_m/(1−γ) ignored by a depth-d truncation.
pub fn truncation_term(r_m: f64, gamma: f64, depth: usize) -> f64 {
    gamma.powi(depth as i32) * r_m / (1.0 - gamma)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("discount {gamma} outside (0,1)")))
    }
}

pub fn tv_rows(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Exact finite-case measure: (max row TV of T vs T̂, max row TV of Z vs Ẑ).
pub fn exact_snm(p: &DiscretePomdp, p_hat: &DiscretePomdp) -> (f64, f64) {
    let mut psi_t = 0.0f64;
    let mut psi_z = 0.0f64;
    for s in 0..p.num_states() {
        for a in 0..p.num_actions() {
            psi_t = psi_t.max(tv_rows(p.transition_row(s, a), p_hat.transition_row(s, a)));
            psi_z = psi_z.max(tv_rows(p.observation_row(s, a), p_hat.observation_row(s, a)));
        }
    }
    (psi_t, psi_z)
}

/// Outcome of checking both value bounds on one model pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub psi_t: f64,
    pub psi_z: f64,
    pub psi: f64,
    pub optimal_value: f64,
    /// V of the P̂-optimal plan re-evaluated under P.
    pub surrogate_value: f64,
    pub value_gap: f64,
    pub value_bound: f64,
    pub max_alpha_gap: f64,
    pub alpha_bound: f64,
    pub value_ok: bool,
    pub alpha_ok: bool,
}

impl BoundCheck {
    pub fn value_slack(&self) -> f64 {
        self.value_bound - self.value_gap
    }
    pub fn alpha_slack(&self) -> f64 {
        self.alpha_bound - self.max_alpha_gap
    }
}

/// Check the value-loss bound (plus the truncation term) and the per-plan
/// α-gap bound for depth-`depth` plans of P versus P̂.
pub fn check_bounds(p: &DiscretePomdp, p_hat: &DiscretePomdp, belief: &[f64], depth: usize) -> Result<BoundCheck> {
    let plans = PlanSet::enumerate(p.num_actions(), p.num_observations(), depth, DEFAULT_PLAN_CAP)?;
    let ns = p.num_states();
    let alphas = plans.alphas(p);
    let alphas_hat = plans.alphas(p_hat);
    let (_, v_star) = best_plan(&alphas, ns, belief);
    let (hat_idx, _) = best_plan(&alphas_hat, ns, belief);
    let v_sur: f64 = alphas[hat_idx * ns..(hat_idx + 1) * ns]
        .iter()
        .zip(belief)
        .map(|(a, b)| a * b)
        .sum();
    let max_alpha_gap = alphas
        .iter()
        .zip(&alphas_hat)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let (psi_t, psi_z) = exact_snm(p, p_hat);
    let psi = psi_t + psi_z;
    let r_m = p.reward_magnitude();
    let gamma = p.gamma();
    let value_bound = value_loss_bound(psi, r_m, gamma)? + truncation_term(r_m, gamma, depth);
    let alpha_bound = alpha_gap_bound(psi, r_m, gamma)?;
    let value_gap = v_star - v_sur;
    // Round-off allowance for sums of a few hundred products.
    let tol = 1e-9 * (1.0 + r_m / (1.0 - gamma));
    Ok(BoundCheck {
        psi_t,
        psi_z,
        psi,
        optimal_value: v_star,
        surrogate_value: v_sur,
        value_gap,
        value_bound,
        max_alpha_gap,
        alpha_bound,
        value_ok: value_gap <= value_bound + tol,
        alpha_ok: max_alpha_gap <= alpha_bound + tol,
    })
}
