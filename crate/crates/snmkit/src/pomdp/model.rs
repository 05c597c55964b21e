use nalgebra::DMatrix;

use super::Space;
use crate::rng::SimRng;

/// What happened during one true transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Step {
    /// The motion hit an obstacle.
    pub collided: bool,
    /// The successor left the valid region and is an absorbing terminal
    /// state. Estimators treat such mass as a separate "sink" outcome.
    pub absorbed: bool,
}

/// Jacobians of the motion model at a reference point: ∂f/∂s, ∂f/∂a, ∂f/∂v.
pub type MotionJacobians = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);
/// Jacobians of the sensor model at a reference point: ∂h/∂s, ∂h/∂w.
pub type SensorJacobians = (DMatrix<f64>, DMatrix<f64>);

/// A continuous-state POMDP defined through noise-driven generative functions.
///
/// States, actions and observations are plain `f64` slices whose layout is
/// described by the three [`Space`]s. Transition and observation noise are
/// explicit inputs so the same model can be sampled, linearized and replayed
/// deterministically.
pub trait PomdpModel: Send + Sync {
    fn state_space(&self) -> &Space;
    fn action_space(&self) -> &Space;
    fn observation_space(&self) -> &Space;

    /// The discretized action set used by search and by the SNM estimator.
    fn actions(&self) -> &[Vec<f64>];

    fn transition_noise_dim(&self) -> usize;
    fn observation_noise_dim(&self) -> usize;
    fn transition_noise_cov(&self) -> DMatrix<f64>;
    fn observation_noise_cov(&self) -> DMatrix<f64>;
    fn sample_transition_noise(&self, rng: &mut SimRng, v: &mut [f64]);
    fn sample_observation_noise(&self, rng: &mut SimRng, w: &mut [f64]);

    /// The motion function that gets linearized, before bound projection.
    fn dynamics(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]);

    /// The true transition: motion, environment effects and bound handling.
    fn transition(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) -> Step;

    /// Sensor function h(s′, a, w).
    fn observe(&self, s: &[f64], a: &[f64], w: &[f64], out: &mut [f64]);

    /// Z(s′, a, o); nonnegative.
    fn observation_density(&self, s: &[f64], a: &[f64], o: &[f64]) -> f64;

    fn reward(&self, s: &[f64], a: &[f64], next: &[f64], step: Step) -> f64;

    fn is_terminal(&self, s: &[f64], step: Step) -> bool;

    /// Whether a state may be occupied at all (collision-free).
    fn is_valid(&self, _s: &[f64]) -> bool {
        true
    }

    fn discount(&self) -> f64;

    fn motion_jacobians(&self, _s: &[f64], _a: &[f64]) -> Option<MotionJacobians> {
        None
    }

    fn sensor_jacobians(&self, _s: &[f64], _a: &[f64]) -> Option<SensorJacobians> {
        None
    }

    /// Draw s′ ~ T(s, a, ·).
    fn sample_transition(&self, s: &[f64], a: &[f64], rng: &mut SimRng) -> (Vec<f64>, Step) {
        let mut v = vec![0.0; self.transition_noise_dim()];
        self.sample_transition_noise(rng, &mut v);
        let mut out = vec![0.0; self.state_space().dim()];
        let step = self.transition(s, a, &v, &mut out);
        (out, step)
    }

    /// Draw o ~ Z(s′, a, ·).
    fn sample_observation(&self, s: &[f64], a: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let mut w = vec![0.0; self.observation_noise_dim()];
        self.sample_observation_noise(rng, &mut w);
        let mut out = vec![0.0; self.observation_space().dim()];
        self.observe(s, a, &w, &mut out);
        out
    }

    /// Noise-free transition.
    fn nominal_transition(&self, s: &[f64], a: &[f64]) -> (Vec<f64>, Step) {
        let v = vec![0.0; self.transition_noise_dim()];
        let mut out = vec![0.0; self.state_space().dim()];
        let step = self.transition(s, a, &v, &mut out);
        (out, step)
    }

    /// Noise-free (maximum-likelihood) observation.
    fn nominal_observation(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let w = vec![0.0; self.observation_noise_dim()];
        let mut out = vec![0.0; self.observation_space().dim()];
        self.observe(s, a, &w, &mut out);
        out
    }
}
