use rand::Rng;
use serde::Serialize;

use crate::pomdp::{check_bounds, BoundCheck, DiscretePomdp};
use crate::rng::{stream, SimRng};
use crate::Result;

/// Checks of the value-loss and α-gap bounds over several perturbed copies
/// of one or more finite POMDPs.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn value_violations(&self) -> usize {
        self.checks.iter().filter(|c| !c.value_ok).count()
    }

    pub fn alpha_violations(&self) -> usize {
        self.checks.iter().filter(|c| !c.alpha_ok).count()
    }

    pub fn min_value_slack(&self) -> f64 {
        self.checks
            .iter()
            .map(BoundCheck::value_slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_alpha_slack(&self) -> f64 {
        self.checks
            .iter()
            .map(BoundCheck::alpha_slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.value_violations() == 0 && self.alpha_violations() == 0
    }
}

/// Compare `dp` against `count` perturbed copies, each mixing every row
/// with a random distribution at a weight drawn uniformly from
/// (0, `max_perturbation`], using the model's initial belief.
pub fn verify_bounds(
    dp: &DiscretePomdp,
    depth: usize,
    max_perturbation: f64,
    count: usize,
    rng: &mut SimRng,
) -> Result<BoundsReport> {
    let belief = dp.initial_belief();
    let mut report = BoundsReport::default();
    for _ in 0..count {
        let eps = max_perturbation * (1.0 - rng.random::<f64>());
        let p_hat = dp.perturbed(eps, rng);
        report.checks.push(check_bounds(dp, &p_hat, &belief, depth)?);
    }
    Ok(report)
}

/// [`verify_bounds`] on `models` random instances with `ns` states, `na`
/// actions and `no` observations, `perturbations` copies each.
#[allow(clippy::too_many_arguments)]
pub fn random_bound_suite(
    models: usize,
    perturbations: usize,
    (ns, na, no): (usize, usize, usize),
    depth: usize,
    max_perturbation: f64,
    discount: f64,
    seed: u64,
) -> Result<BoundsReport> {
    let mut report = BoundsReport::default();
    for m in 0..models {
        let mut rng = stream(seed, &[m as u64]);
        let dp = DiscretePomdp::random(ns, na, no, 10.0, discount, &mut rng);
        report
            .checks
            .extend(verify_bounds(&dp, depth, max_perturbation, perturbations, &mut rng)?.checks);
    }
    Ok(report)
}
