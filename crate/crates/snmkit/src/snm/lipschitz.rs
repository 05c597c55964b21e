use crate::linearize::linearize_at;
use crate::pomdp::{PomdpModel, Space};
use crate::rng::SimRng;
use crate::Result;

use super::HistogramGrid;

/// ½·√n·D(s₁, s₂)·(C_T + C_T̂), with D the Euclidean distance between the
/// normalized states `s1` and `s2`.
pub fn lipschitz_gap_bound(s1: &[f64], s2: &[f64], c_t: f64, c_t_hat: f64) -> f64 {
    let n = s1.len() as f64;
    let d: f64 = s1.iter().zip(s2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    0.5 * n.sqrt() * d * (c_t + c_t_hat)
}

/// Empirical local Lipschitz constants of the true and linearized
/// transition densities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzConstants {
    pub c_t: f64,
    pub c_t_hat: f64,
}

/// Normalized-space histogram densities of `n` draws, on a fixed grid with
/// `k` bins per dimension plus one atom for absorbed samples.
fn density(space: &Space, draws: impl Iterator<Item = (Vec<f64>, bool)>, grid: &HistogramGrid) -> Vec<f64> {
    let total = grid.total_bins();
    let mut h = vec![0.0; total + 1];
    let mut n = 0.0;
    let vol = grid.cell_volume();
    for (s, absorbed) in draws {
        n += 1.0;
        if absorbed {
            h[total] += 1.0;
            continue;
        }
        let (u, _) = space.normalize(&s);
        h[grid.bin_of(&u).expect("normalized states lie in the unit cube")] += 1.0;
    }
    for (i, x) in h.iter_mut().enumerate() {
        *x /= if i < total { n * vol } else { n };
    }
    h
}

/// Estimate C_T and C_T̂ as the largest ratio, over pairs of probe states
/// and over actions, between the sup-norm difference of binned transition
/// densities and the normalized distance between the probes.
pub fn estimate_lipschitz_constants<M: PomdpModel + ?Sized>(
    model: &M,
    probes: &[Vec<f64>],
    actions: &[Vec<f64>],
    n: usize,
    k: usize,
    rng: &mut SimRng,
) -> Result<LipschitzConstants> {
    let space = model.state_space();
    let grid = HistogramGrid::uniform(vec![0.0; space.dim()], vec![1.0; space.dim()], k)?;
    let mut truth = Vec::with_capacity(probes.len());
    let mut approx = Vec::with_capacity(probes.len());
    for s in probes {
        let mut t_row = Vec::with_capacity(actions.len());
        let mut a_row = Vec::with_capacity(actions.len());
        for a in actions {
            let lin = linearize_at(model, s, a)?;
            t_row.push(density(
                space,
                (0..n).map(|_| {
                    let (next, step) = model.sample_transition(s, a, rng);
                    (next, step.absorbed)
                }),
                &grid,
            ));
            a_row.push(density(
                space,
                (0..n).map(|_| (lin.sample_transition(model, s, a, rng), false)),
                &grid,
            ));
        }
        truth.push(t_row);
        approx.push(a_row);
    }
    let normalized: Vec<Vec<f64>> = probes.iter().map(|s| space.normalize(s).0).collect();
    let mut c = LipschitzConstants { c_t: 0.0, c_t_hat: 0.0 };
    for i in 0..probes.len() {
        for j in i + 1..probes.len() {
            let d = lipschitz_gap_bound(&normalized[i], &normalized[j], 1.0, 1.0) / (space.dim() as f64).sqrt();
            if d <= 0.0 {
                continue;
            }
            for a in 0..actions.len() {
                let sup = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                c.c_t = c.c_t.max(sup(&truth[i][a], &truth[j][a]) / d);
                c.c_t_hat = c.c_t_hat.max(sup(&approx[i][a], &approx[j][a]) / d);
            }
        }
    }
    Ok(c)
}
