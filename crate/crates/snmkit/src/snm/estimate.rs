use crate::linearize::linearize_at;
use crate::mong::{negentropy, MongComponents};
use crate::pomdp::PomdpModel;
use crate::rng::SimRng;
use crate::{Error, Result};

use super::{tv_histogram_with_sink, HistogramGrid};

/// Per-state SNM components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SnmComponents {
    /// Ψ_T(s): maximum over actions of the transition TV.
    pub psi_t: f64,
    /// Ψ_Z(s): TV between true and linearized observations at s.
    pub psi_z: f64,
    /// Transition TV for each action, in action order.
    pub per_action: Vec<f64>,
}

impl SnmComponents {
    pub fn total(&self) -> f64 {
        self.psi_t + self.psi_z
    }
}

/// Everything a lookup-table row needs, from one set of draws.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMeasures {
    pub snm: SnmComponents,
    pub mong: Option<MongComponents>,
}

/// Estimate Ψ_T(s) and Ψ_Z(s) with `n` draws per distribution and `k` bins
/// per dimension.
pub fn snm_components_at<M: PomdpModel + ?Sized>(
    model: &M,
    s: &[f64],
    actions: &[Vec<f64>],
    n: usize,
    k: usize,
    rng: &mut SimRng,
) -> Result<SnmComponents> {
    Ok(measure_state(model, s, actions, n, k, false, rng)?.snm)
}

/// [`snm_components_at`], optionally also computing MoNG from the same true
/// samples.
pub fn measure_state<M: PomdpModel + ?Sized>(
    model: &M,
    s: &[f64],
    actions: &[Vec<f64>],
    n: usize,
    k: usize,
    with_mong: bool,
    rng: &mut SimRng,
) -> Result<StateMeasures> {
    if actions.is_empty() {
        return Err(Error::InvalidArgument("empty action set".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let mut per_action = Vec::with_capacity(actions.len());
    let mut mong_t = f64::NEG_INFINITY;
    for a in actions {
        let lin = linearize_at(model, s, a)?;
        let mut truth = Vec::with_capacity(n);
        let mut sink = 0;
        for _ in 0..n {
            let (next, step) = model.sample_transition(s, a, rng);
            if step.absorbed {
                sink += 1;
            } else {
                truth.push(next);
            }
        }
        let approx: Vec<Vec<f64>> = (0..n).map(|_| lin.sample_transition(model, s, a, rng)).collect();
        let grid = HistogramGrid::spanning([&truth[..], &approx[..]], k)?;
        per_action.push(tv_histogram_with_sink(&truth, sink, &approx, 0, &grid));
        if with_mong {
            mong_t = mong_t.max(negentropy(&truth).value);
        }
    }
    // The sensors do not depend on the action, so Ψ_Z is computed once.
    let a0 = &actions[0];
    let lin = linearize_at(model, s, a0)?;
    let truth: Vec<Vec<f64>> = (0..n).map(|_| model.sample_observation(s, a0, rng)).collect();
    let approx: Vec<Vec<f64>> = (0..n).map(|_| lin.sample_observation(model, s, rng)).collect();
    let grid = HistogramGrid::spanning([&truth[..], &approx[..]], k)?;
    let psi_z = tv_histogram_with_sink(&truth, 0, &approx, 0, &grid);
    let mong = with_mong.then(|| MongComponents {
        transition: mong_t,
        observation: negentropy(&truth).value,
    });
    Ok(StateMeasures {
        snm: SnmComponents {
            psi_t: per_action.iter().copied().fold(0.0, f64::max),
            psi_z,
            per_action,
        },
        mong,
    })
}
