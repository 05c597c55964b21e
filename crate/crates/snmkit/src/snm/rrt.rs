use std::collections::HashMap;

use crate::pomdp::{ParticleBelief, PomdpModel, Space};
use crate::rng::SimRng;
use crate::{Error, Result};

/// Consecutive failed extensions after which a fresh tree is started.
pub const STALL_LIMIT: usize = 200;
/// Fresh trees in a row that may fail to add a node before giving up.
const MAX_RESTARTS: usize = 50;

pub(crate) fn embed(space: &Space, s: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(space.embed_dim());
    space.embed(s, &mut out);
    out
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Node states of kinodynamic RRTs grown with noise-free dynamics from
/// starts drawn from `b0`, `node_budget` of them in total.
///
/// Each iteration samples a random state, picks the nearest node in the
/// embedded metric, and keeps the collision-free successor (one step of a
/// discrete action) that lands closest to the sample. When no node has been
/// added for [`STALL_LIMIT`] iterations, a new tree is started.
pub fn rrt_state_samples<M: PomdpModel + ?Sized>(
    model: &M,
    b0: &ParticleBelief,
    node_budget: usize,
    rng: &mut SimRng,
) -> Result<Vec<Vec<f64>>> {
    if node_budget == 0 {
        return Err(Error::InvalidArgument("node budget must be positive".into()));
    }
    let space = model.state_space();
    let new_root = |rng: &mut SimRng| -> Result<Vec<f64>> {
        let s = b0.sample(rng).to_vec();
        if model.is_valid(&s) {
            Ok(s)
        } else {
            Err(Error::InvalidScenario(format!("start state {s:?} is in collision")))
        }
    };
    let key = |s: &[f64]| s.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    let root = new_root(rng)?;
    let mut index = HashMap::from([(key(&root), 0)]);
    let mut nodes = vec![root.clone()];
    let mut embedded = vec![embed(space, &root)];
    // Indices of the tree currently being grown.
    let mut tree = vec![0];
    let mut stalled = 0;
    let mut restarts = 0;
    while nodes.len() < node_budget {
        if stalled >= STALL_LIMIT {
            restarts += 1;
            if restarts > MAX_RESTARTS {
                return Err(Error::InvalidScenario(format!(
                    "state sampling stalled at {} of {node_budget} states",
                    nodes.len()
                )));
            }
            let root = new_root(rng)?;
            let i = *index.entry(key(&root)).or_insert(nodes.len());
            if i == nodes.len() {
                embedded.push(embed(space, &root));
                nodes.push(root);
            }
            tree = vec![i];
            stalled = 0;
            continue;
        }
        let target = embed(space, &space.sample(rng));
        let near = *tree
            .iter()
            .min_by(|&&i, &&j| sq_dist(&embedded[i], &target).total_cmp(&sq_dist(&embedded[j], &target)))
            .expect("tree is nonempty");
        let mut best: Option<(f64, Vec<f64>)> = None;
        for a in model.actions() {
            let (next, step) = model.nominal_transition(&nodes[near], a);
            if step.absorbed || !model.is_valid(&next) {
                continue;
            }
            let d = sq_dist(&embed(space, &next), &target);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, next));
            }
        }
        // Duplicates would make nearest-neighbour lookups ambiguous.
        match best {
            Some((_, next)) if !index.contains_key(&key(&next)) => {
                index.insert(key(&next), nodes.len());
                tree.push(nodes.len());
                embedded.push(embed(space, &next));
                nodes.push(next);
                stalled = 0;
                restarts = 0;
            }
            _ => stalled += 1,
        }
    }
    Ok(nodes)
}
