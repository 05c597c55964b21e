use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{angle_diff, PomdpModel, Space, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Weighted particle approximation of a belief.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleBelief {
    particles: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ParticleBelief {
    pub fn new(particles: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("belief needs at least one particle".into()));
        }
        if particles.len() != weights.len() {
            return Err(Error::InvalidArgument("one weight per particle required".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(ParticleBelief { particles, weights })
    }

    pub fn uniform(particles: Vec<Vec<f64>>) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![1.0; n])
    }

    /// `count` copies of one state.
    pub fn point(state: &[f64], count: usize) -> Self {
        let count = count.max(1);
        ParticleBelief {
            particles: vec![state.to_vec(); count],
            weights: vec![1.0 / count as f64; count],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Vec<f64>] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.particles
            .iter()
            .map(Vec::as_slice)
            .zip(self.weights.iter().copied())
    }

    /// Draw a particle according to the weights.
    pub fn sample(&self, rng: &mut SimRng) -> &[f64] {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (p, w) in self.iter() {
            acc += w;
            if u < acc {
                return p;
            }
        }
        self.particles.last().unwrap()
    }
}

/// Multivariate Gaussian belief.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianBelief { mean, cov }
    }
}

/// The SIR update found no particle compatible with the observation.
/// Carries the propagated particles so the caller can continue from them.
#[derive(Clone, Debug)]
pub struct DegenerateUpdate {
    pub propagated: ParticleBelief,
}

/// One SIR step: propagate every particle, weight by Z(s′, a, o), then
/// systematically resample `target_count` equally weighted particles.
///
/// The update is only meaningful while the episode is still running, so
/// particles that land in a terminal state get zero weight: the agent knows
/// it has not terminated.
pub fn belief_update_pf<M: PomdpModel + ?Sized>(
    belief: &ParticleBelief,
    action: &[f64],
    obs: &[f64],
    model: &M,
    target_count: usize,
    rng: &mut SimRng,
) -> std::result::Result<ParticleBelief, DegenerateUpdate> {
    let target_count = target_count.max(1);
    let n = model.state_space().dim();
    let mut v = vec![0.0; model.transition_noise_dim()];
    let mut propagated = Vec::with_capacity(belief.len());
    let mut weights = Vec::with_capacity(belief.len());
    for (p, w0) in belief.iter() {
        model.sample_transition_noise(rng, &mut v);
        let mut next = vec![0.0; n];
        let step = model.transition(p, action, &v, &mut next);
        let w = if model.is_terminal(&next, step) {
            0.0
        } else {
            w0 * model.observation_density(&next, action, obs)
        };
        propagated.push(next);
        weights.push(if w.is_finite() { w } else { 0.0 });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        let prior = ParticleBelief::uniform(propagated).expect("nonempty");
        return Err(DegenerateUpdate { propagated: prior });
    }
    let picks = systematic_resample(&weights, target_count, rng);
    let particles = picks.into_iter().map(|i| propagated[i].clone()).collect();
    Ok(ParticleBelief {
        particles,
        weights: vec![1.0 / target_count as f64; target_count],
    })
}

/// [`belief_update_pf`] with the degenerate case resolved by keeping the
/// propagated particles under uniform weights.
pub fn belief_update_or_prior<M: PomdpModel + ?Sized>(
    belief: &ParticleBelief,
    action: &[f64],
    obs: &[f64],
    model: &M,
    target_count: usize,
    rng: &mut SimRng,
) -> (ParticleBelief, bool) {
    match belief_update_pf(belief, action, obs, model, target_count, rng) {
        Ok(b) => (b, false),
        Err(DegenerateUpdate { propagated }) => {
            log::debug!("particle filter degenerate: falling back to propagated particles");
            (propagated, true)
        }
    }
}

/// Indices chosen by systematic resampling of unnormalized weights.
pub fn systematic_resample(weights: &[f64], count: usize, rng: &mut SimRng) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / count as f64;
    let mut u = rng.random::<f64>() * step;
    let mut picks = Vec::with_capacity(count);
    let mut acc = weights[0];
    let mut i = 0;
    for _ in 0..count {
        while u > acc && i + 1 < weights.len() {
            i += 1;
            acc += weights[i];
        }
        picks.push(i);
        u += step;
    }
    picks
}

/// Weighted mean and covariance of the particle set.
pub fn belief_moments(belief: &ParticleBelief) -> GaussianBelief {
    moments(belief, None)
}

/// Like [`belief_moments`], but angular dimensions of `space` use the
/// circular mean and wrapped deviations.
pub fn belief_moments_on(belief: &ParticleBelief, space: &Space) -> GaussianBelief {
    moments(belief, Some(space))
}

fn moments(belief: &ParticleBelief, space: Option<&Space>) -> GaussianBelief {
    let d = belief.particles[0].len();
    let angular = |i: usize| space.is_some_and(|s| s.is_angular(i));
    let mut mean = DVector::zeros(d);
    for i in 0..d {
        if angular(i) {
            let (mut sx, mut cx) = (0.0, 0.0);
            for (p, w) in belief.iter() {
                sx += w * p[i].sin();
                cx += w * p[i].cos();
            }
            mean[i] = sx.atan2(cx);
        } else {
            mean[i] = belief.iter().map(|(p, w)| w * p[i]).sum();
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    let mut dev = DVector::zeros(d);
    for (p, w) in belief.iter() {
        for i in 0..d {
            dev[i] = if angular(i) {
                angle_diff(p[i], mean[i])
            } else {
                p[i] - mean[i]
            };
        }
        cov += w * &dev * dev.transpose();
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianBelief { mean, cov }
}

/// Chooses actions from beliefs during a simulated episode.
pub trait Policy {
    fn act(&mut self, belief: &ParticleBelief, rng: &mut SimRng) -> Vec<f64>;

    /// Told about each executed action and the observation that followed.
    fn observe(&mut self, _action: &[f64], _obs: &[f64]) {}
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub observation: Vec<f64>,
    pub reward: f64,
    pub step: Step,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub trace: Vec<TraceStep>,
    pub discounted_return: f64,
    pub terminal: bool,
}

/// Closed-loop simulation with a particle-filter belief.
pub fn simulate_episode<M: PomdpModel + ?Sized, P: Policy + ?Sized>(
    model: &M,
    policy: &mut P,
    b0: &ParticleBelief,
    max_steps: usize,
    rng: &mut SimRng,
) -> Episode {
    let gamma = model.discount();
    let mut state = b0.sample(rng).to_vec();
    let mut belief = b0.clone();
    let mut trace = Vec::new();
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut terminal = false;
    for _ in 0..max_steps {
        let action = policy.act(&belief, rng);
        let (next, step) = model.sample_transition(&state, &action, rng);
        let obs = model.sample_observation(&next, &action, rng);
        let reward = model.reward(&state, &action, &next, step);
        ret += discount * reward;
        discount *= gamma;
        terminal = model.is_terminal(&next, step);
        trace.push(TraceStep {
            state: state.clone(),
            action: action.clone(),
            next_state: next.clone(),
            observation: obs.clone(),
            reward,
            step,
        });
        state = next;
        if terminal {
            break;
        }
        policy.observe(&action, &obs);
        belief = belief_update_or_prior(&belief, &action, &obs, model, b0.len(), rng).0;
    }
    Episode {
        trace,
        discounted_return: ret,
        terminal,
    }
}
