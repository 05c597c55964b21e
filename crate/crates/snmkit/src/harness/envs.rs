use rand::Rng;

use crate::models::{Environment, Obstacle, START};
use crate::rng::stream;

/// Half-side range of generated square obstacles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleSize {
    pub min_half: f64,
    pub max_half: f64,
}

impl Default for ObstacleSize {
    fn default() -> Self {
        ObstacleSize {
            min_half: 0.03,
            max_half: 0.08,
        }
    }
}

/// Placement attempts per obstacle before it is skipped.
pub const PLACEMENT_RETRIES: usize = 200;
/// Clearance kept around the goal disc.
const GOAL_MARGIN: f64 = 0.05;

/// A generated environment and its file stem.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedEnvironment {
    pub name: String,
    pub environment: Environment,
}

fn blocks_goal(env: &Environment, o: &Obstacle) -> bool {
    let [gx, gy] = env.goal.center;
    let dx = (gx - gx.clamp(o.min[0], o.max[0])).abs();
    let dy = (gy - gy.clamp(o.min[1], o.max[1])).abs();
    dx.hypot(dy) < env.goal.radius + GOAL_MARGIN
}

/// `count` environments for every entry of `obstacle_counts`, with square
/// boxes placed uniformly at random. Boxes that would touch the start pose
/// or crowd the goal are redrawn; a box that cannot be placed after
/// [`PLACEMENT_RETRIES`] draws is skipped with a warning.
pub fn random_environments(
    count: usize,
    obstacle_counts: &[usize],
    size: ObstacleSize,
    seed: u64,
) -> Vec<GeneratedEnvironment> {
    let mut out = Vec::with_capacity(count * obstacle_counts.len());
    for &k in obstacle_counts {
        for i in 0..count {
            let mut rng = stream(seed, &[k as u64, i as u64]);
            let mut env = Environment::empty();
            for j in 0..k {
                let placed = (0..PLACEMENT_RETRIES).find_map(|_| {
                    let h = rng.random_range(size.min_half..=size.max_half);
                    let cx = rng.random_range(-1.0 + h..=1.0 - h);
                    let cy = rng.random_range(-1.0 + h..=1.0 - h);
                    let o = Obstacle::new([cx - h, cy - h], [cx + h, cy + h]);
                    let mut trial = env.clone();
                    trial.obstacles.push(o);
                    let ok = !blocks_goal(&trial, &o) && !trial.collides(START[0], START[1], START[2]);
                    ok.then_some(o)
                });
                match placed {
                    Some(o) => env.obstacles.push(o),
                    None => log::warn!("environment {k}-{i}: skipped obstacle {j} after {PLACEMENT_RETRIES} attempts"),
                }
            }
            out.push(GeneratedEnvironment {
                name: format!("random-{k}obs-{i:03}"),
                environment: env,
            });
        }
    }
    out
}
