use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::pomdp::{wrap_angle, MotionJacobians, PomdpModel, SensorJacobians, Space, Step};
use crate::rng::SimRng;

pub const DT: f64 = 0.3;
/// Wheelbase-like constant dividing the steering term.
pub const STEER_DIVISOR: f64 = 0.11;
pub const START: [f64; 4] = [-0.7, -0.7, 1.57, 0.0];
/// Internal sample count of the kernel density used for non-additive sensing.
pub const KDE_SAMPLES: usize = 200;

pub const COLLISION_REWARD: f64 = -500.0;
pub const GOAL_REWARD: f64 = 1000.0;
pub const STEP_REWARD: f64 = -1.0;

const X_MAX: f64 = 1.0;
// The heading bound of the task, not π.
#[allow(clippy::approx_constant)]
const THETA_MAX: f64 = 3.14;
const V_MAX: f64 = 0.2;

/// Control and sensor error levels. Both are standard deviations in the
/// normalized action and observation spaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub e_t: f64,
    pub e_z: f64,
}

impl NoiseSpec {
    pub fn new(e_t: f64, e_z: f64) -> Self {
        assert!(e_t >= 0.0 && e_z >= 0.0, "noise levels must be nonnegative");
        NoiseSpec { e_t, e_z }
    }

    pub fn uniform(e: f64) -> Self {
        Self::new(e, e)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationKind {
    #[default]
    Additive,
    Nonadditive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarVariant {
    /// Bounce off obstacles instead of terminating on contact.
    #[serde(default)]
    pub collision_dynamics: bool,
    #[serde(default)]
    pub observation: ObservationKind,
}

/// Bicycle kinematics with noisy controls, then bound handling.
pub fn car_step(s: [f64; 4], a: [f64; 2], v: [f64; 2], dt: f64) -> [f64; 4] {
    let mut out = raw_step(s, a, v, dt);
    project(&mut out);
    out
}

/// [`car_step`], except that a colliding successor is replaced by the
/// pre-step pose with the velocity reversed and tripled.
pub fn car_step_collision(s: [f64; 4], a: [f64; 2], v: [f64; 2], env: &Environment, dt: f64) -> [f64; 4] {
    let next = car_step(s, a, v, dt);
    if env.collides(next[0], next[1], next[2]) {
        bounce(s)
    } else {
        next
    }
}

fn raw_step(s: [f64; 4], a: [f64; 2], v: [f64; 2], dt: f64) -> [f64; 4] {
    let [x, y, th, vel] = s;
    let (sin, cos) = th.sin_cos();
    [
        x + dt * vel * cos,
        y + dt * vel * sin,
        th + dt * (a[1] + v[1]).tan() / STEER_DIVISOR,
        vel + dt * (a[0] + v[0]),
    ]
}

fn bounce(s: [f64; 4]) -> [f64; 4] {
    [s[0], s[1], s[2], (-3.0 * s[3]).clamp(-V_MAX, V_MAX)]
}

fn project(s: &mut [f64; 4]) {
    s[0] = s[0].clamp(-X_MAX, X_MAX);
    s[1] = s[1].clamp(-X_MAX, X_MAX);
    s[2] = wrap_angle(s[2]).clamp(-THETA_MAX, THETA_MAX);
    s[3] = s[3].clamp(-V_MAX, V_MAX);
}

/// Beacon signal strengths and speed, plus additive noise.
pub fn car_observe_additive(s: [f64; 4], env: &Environment, w: [f64; 3]) -> [f64; 3] {
    let [d1, d2] = env.beacon_sq_dists(s[0], s[1]);
    [1.0 / (d1 + 1.0) + w[0], 1.0 / (d2 + 1.0) + w[1], s[3] + w[2]]
}

/// Beacon signals with the position noise inside the non-linearity.
pub fn car_observe_nonadditive(s: [f64; 4], env: &Environment, w: [f64; 3]) -> [f64; 3] {
    let [d1, d2] = env.beacon_sq_dists(s[0] + w[0], s[1] + w[1]);
    [1.0 / (d1 + 1.0), 1.0 / (d2 + 1.0), s[3] + w[2]]
}

fn arr4(s: &[f64]) -> [f64; 4] {
    [s[0], s[1], s[2], s[3]]
}

/// The car-like robot POMDP in a given environment.
#[derive(Clone, Debug)]
pub struct CarModel {
    pub env: Environment,
    pub noise: NoiseSpec,
    pub variant: CarVariant,
    pub dt: f64,
    discount: f64,
    state_space: Space,
    action_space: Space,
    observation_space: Space,
    actions: Vec<Vec<f64>>,
    /// Raw standard deviations of (α̃, φ̃) and of the three sensor noises.
    sd_v: [f64; 2],
    sd_w: [f64; 3],
}

impl CarModel {
    pub fn new(env: Environment, noise: NoiseSpec, variant: CarVariant) -> Self {
        let state_space = Space::new(
            vec![-X_MAX, -X_MAX, -THETA_MAX, -V_MAX],
            vec![X_MAX, X_MAX, THETA_MAX, V_MAX],
        )
        .with_angular(2);
        let action_space = Space::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let observation_space = Space::new(vec![0.0, 0.0, -V_MAX], vec![1.0, 1.0, V_MAX]);
        let mut actions = Vec::with_capacity(9);
        for acc in [-1.0, 0.0, 1.0] {
            for steer in [-1.0, 0.0, 1.0] {
                actions.push(vec![acc, steer]);
            }
        }
        let sd_v = [noise.e_t * action_space.width(0), noise.e_t * action_space.width(1)];
        let sd_w = [
            noise.e_z * observation_space.width(0),
            noise.e_z * observation_space.width(1),
            noise.e_z * observation_space.width(2),
        ];
        CarModel {
            env,
            noise,
            variant,
            dt: DT,
            discount: 0.95,
            state_space,
            action_space,
            observation_space,
            actions,
            sd_v,
            sd_w,
        }
    }

    pub fn with_discount(mut self, gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0);
        self.discount = gamma;
        self
    }

    pub fn collides(&self, s: &[f64]) -> bool {
        self.env.collides(s[0], s[1], s[2])
    }

    pub fn in_goal(&self, s: &[f64]) -> bool {
        self.env.in_goal(s[0], s[1])
    }

    pub fn transition_sd(&self) -> [f64; 2] {
        self.sd_v
    }

    pub fn observation_sd(&self) -> [f64; 3] {
        self.sd_w
    }

    fn h(&self, s: &[f64], w: &[f64]) -> [f64; 3] {
        let s = arr4(s);
        let w = [w[0], w[1], w[2]];
        match self.variant.observation {
            ObservationKind::Additive => car_observe_additive(s, &self.env, w),
            ObservationKind::Nonadditive => car_observe_nonadditive(s, &self.env, w),
        }
    }

    /// Product-Gaussian kernel density of the sensor output at `s`, built
    /// from a fixed number of noise draws seeded by the state itself so that
    /// repeated queries agree.
    fn kde_density(&self, s: &[f64], o: &[f64]) -> f64 {
        let seed = s.iter().fold(0x5EED_u64, |h, x| {
            (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3).rotate_left(17)
        });
        let mut rng = SimRng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(KDE_SAMPLES);
        let mut w = [0.0; 3];
        for _ in 0..KDE_SAMPLES {
            for (k, wk) in w.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *wk = self.sd_w[k] * z;
            }
            samples.push(self.h(s, &w));
        }
        let m = KDE_SAMPLES as f64;
        let silverman = (4.0 / (5.0 * m)).powf(1.0 / 7.0);
        let mut bw = [0.0; 3];
        for k in 0..3 {
            let mean = samples.iter().map(|x| x[k]).sum::<f64>() / m;
            let var = samples.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            bw[k] = (var.sqrt() * silverman).max(1e-12);
        }
        let norm: f64 = bw.iter().map(|b| b * (2.0 * std::f64::consts::PI).sqrt()).product();
        samples
            .iter()
            .map(|x| {
                let q: f64 = (0..3).map(|k| ((o[k] - x[k]) / bw[k]).powi(2)).sum();
                (-0.5 * q).exp()
            })
            .sum::<f64>()
            / (m * norm)
    }
}

impl PomdpModel for CarModel {
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
        2
    }
    fn observation_noise_dim(&self) -> usize {
        3
    }
    fn transition_noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2, self.sd_v.iter().map(|s| s * s)))
    }
    fn observation_noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, self.sd_w.iter().map(|s| s * s)))
    }
    fn sample_transition_noise(&self, rng: &mut SimRng, v: &mut [f64]) {
        for (k, vk) in v.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *vk = self.sd_v[k] * z;
        }
    }
    fn sample_observation_noise(&self, rng: &mut SimRng, w: &mut [f64]) {
        for (k, wk) in w.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *wk = self.sd_w[k] * z;
        }
    }

    /// The smooth motion model, without bounds or collisions. Both variants
    /// linearize this function; the bounce branch is left to the true model.
    fn dynamics(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&raw_step(arr4(s), [a[0], a[1]], [v[0], v[1]], self.dt));
    }

    fn transition(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) -> Step {
        let s4 = arr4(s);
        let mut next = raw_step(s4, [a[0], a[1]], [v[0], v[1]], self.dt);
        project(&mut next);
        let collided = self.env.collides(next[0], next[1], next[2]);
        if collided && self.variant.collision_dynamics {
            out.copy_from_slice(&bounce(s4));
            return Step {
                collided: true,
                absorbed: false,
            };
        }
        out.copy_from_slice(&next);
        Step {
            collided,
            absorbed: collided,
        }
    }

    fn observe(&self, s: &[f64], _a: &[f64], w: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.h(s, w));
    }

    fn observation_density(&self, s: &[f64], _a: &[f64], o: &[f64]) -> f64 {
        if self.noise.e_z == 0.0 {
            let h = self.h(s, &[0.0; 3]);
            let close = h.iter().zip(o).all(|(a, b)| (a - b).abs() <= 1e-9);
            return if close { 1.0 } else { 0.0 };
        }
        match self.variant.observation {
            ObservationKind::Additive => {
                let h = self.h(s, &[0.0; 3]);
                let mut q = 0.0;
                let mut norm = 1.0;
                for k in 0..3 {
                    q += ((o[k] - h[k]) / self.sd_w[k]).powi(2);
                    norm *= self.sd_w[k] * (2.0 * std::f64::consts::PI).sqrt();
                }
                (-0.5 * q).exp() / norm
            }
            ObservationKind::Nonadditive => self.kde_density(s, o),
        }
    }

    fn reward(&self, _s: &[f64], _a: &[f64], next: &[f64], step: Step) -> f64 {
        if step.collided {
            COLLISION_REWARD
        } else if self.in_goal(next) {
            GOAL_REWARD
        } else {
            STEP_REWARD
        }
    }

    fn is_terminal(&self, s: &[f64], step: Step) -> bool {
        step.absorbed || self.in_goal(s)
    }

    fn is_valid(&self, s: &[f64]) -> bool {
        !self.collides(s)
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn motion_jacobians(&self, s: &[f64], a: &[f64]) -> Option<MotionJacobians> {
        let dt = self.dt;
        let (sin, cos) = s[2].sin_cos();
        let vel = s[3];
        let sec2 = 1.0 / a[1].cos().powi(2);
        let am = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0,
                0.0,
                -dt * vel * sin,
                dt * cos, //
                0.0,
                1.0,
                dt * vel * cos,
                dt * sin, //
                0.0,
                0.0,
                1.0,
                0.0, //
                0.0,
                0.0,
                0.0,
                1.0,
            ],
        );
        let bm = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 0.0, dt * sec2 / STEER_DIVISOR, dt, 0.0]);
        Some((am, bm.clone(), bm))
    }

    fn sensor_jacobians(&self, s: &[f64], _a: &[f64]) -> Option<SensorJacobians> {
        let mut h = DMatrix::zeros(3, 4);
        for (k, b) in self.env.beacons.iter().enumerate() {
            let (dx, dy) = (s[0] - b[0], s[1] - b[1]);
            let denom = (dx * dx + dy * dy + 1.0).powi(2);
            h[(k, 0)] = -2.0 * dx / denom;
            h[(k, 1)] = -2.0 * dy / denom;
        }
        h[(2, 3)] = 1.0;
        let w = match self.variant.observation {
            ObservationKind::Additive => DMatrix::identity(3, 3),
            ObservationKind::Nonadditive => {
                let mut w = DMatrix::zeros(3, 3);
                for k in 0..2 {
                    w[(k, 0)] = h[(k, 0)];
                    w[(k, 1)] = h[(k, 1)];
                }
                w[(2, 2)] = 1.0;
                w
            }
        };
        Some((h, w))
    }
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::models::Obstacle;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn step_examples() {
        assert_eq!(car_step([0.0; 4], [0.0, 0.0], [0.0, 0.0], DT), [0.0; 4]);
        let s = car_step([0.0, 0.0, 0.0, 0.2], [0.0, 0.0], [0.0, 0.0], DT);
        assert!(close(&s, &[0.06, 0.0, 0.0, 0.2]));
        let s = car_step([0.0; 4], [1.0, 0.0], [0.0, 0.0], DT);
        assert!(close(&s, &[0.0, 0.0, 0.0, 0.2]));
    }

    fn wall() -> Environment {
        Environment {
            obstacles: vec![Obstacle::new([0.065, -0.5], [0.3, 0.5])],
            ..Environment::empty()
        }
    }

    #[test]
    fn collision_step_examples() {
        let env = wall();
        // Free step: identical to the plain dynamics.
        let s = [-0.5, 0.0, 0.0, 0.1];
        assert_eq!(
            car_step_collision(s, [0.0, 0.0], [0.0, 0.0], &env, DT),
            car_step(s, [0.0, 0.0], [0.0, 0.0], DT)
        );
        // Moving into the wall from the origin: velocity −0.3 clamps to −0.2.
        let s = [0.0, 0.0, 0.0, 0.1];
        assert!(env.collides(0.03, 0.0, 0.0));
        assert!(close(
            &car_step_collision(s, [0.0, 0.0], [0.0, 0.0], &env, DT),
            &[0.0, 0.0, 0.0, -0.2]
        ));
        // Zero velocity: the bounce leaves the state unchanged.
        let env2 = Environment {
            obstacles: vec![Obstacle::new([0.0, -0.5], [0.3, 0.5])],
            ..Environment::empty()
        };
        let s = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(car_step_collision(s, [0.0, 0.0], [0.0, 0.0], &env2, DT), s);
    }

    #[test]
    fn observation_examples() {
        let mut env = Environment::empty();
        env.beacons = [[1.0, 0.0], [-1.0, 0.0]];
        let o = car_observe_additive([0.0, 0.0, 0.3, 0.1], &env, [0.0; 3]);
        assert!(close(&o, &[0.5, 0.5, 0.1]));
        let o2 = car_observe_additive([0.0, 0.0, 0.3, 0.1], &env, [0.01, 0.0, 0.0]);
        assert!(close(&o2, &[0.51, 0.5, 0.1]));
        assert_eq!(
            car_observe_nonadditive([0.0, 0.0, 0.3, 0.1], &env, [0.0; 3]),
            car_observe_additive([0.0, 0.0, 0.3, 0.1], &env, [0.0; 3])
        );
        let e = Environment::empty();
        let at_beacon = [e.beacons[0][0], e.beacons[0][1], 0.0, 0.05];
        assert_eq!(car_observe_additive(at_beacon, &e, [0.0; 3])[0], 1.0);
        let o = car_observe_nonadditive(at_beacon, &e, [0.1, 0.0, 0.02]);
        assert!((o[0] - 1.0 / 1.01).abs() < 1e-12);
        assert_eq!(o[2], 0.05 + 0.02);
    }

    #[test]
    fn additive_density_mode_and_mass() {
        let ez = 0.05;
        let m = CarModel::new(Environment::empty(), NoiseSpec::uniform(ez), CarVariant::default());
        let s = [0.1, -0.2, 0.0, 0.1];
        let h = m.nominal_observation(&s, &[0.0, 0.0]);
        let sd = m.observation_sd();
        let mode = m.observation_density(&s, &[0.0, 0.0], &h);
        let expect = 1.0 / ((2.0 * std::f64::consts::PI).powf(1.5) * sd[0] * sd[1] * sd[2]);
        assert!((mode - expect).abs() / expect < 1e-12);
        // Midpoint quadrature over ±5σ.
        let n = 40;
        let mut mass = 0.0;
        let cell: f64 = sd.iter().map(|s| 10.0 * s / n as f64).product();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = [i, j, k];
                    let o: Vec<f64> = (0..3)
                        .map(|d| h[d] - 5.0 * sd[d] + (idx[d] as f64 + 0.5) * 10.0 * sd[d] / n as f64)
                        .collect();
                    mass += m.observation_density(&s, &[0.0, 0.0], &o) * cell;
                }
            }
        }
        assert!((mass - 1.0).abs() < 0.02, "mass {mass}");
    }

    #[test]
    fn additive_mode_formula_for_unit_cube_noise() {
        // With e_Z on every normalized axis, the mode is ((2π)^{3/2} Π σ_k)⁻¹.
        let m = CarModel::new(Environment::empty(), NoiseSpec::uniform(0.01), CarVariant::default());
        let s = [0.0, 0.0, 0.0, 0.0];
        let h = m.nominal_observation(&s, &[0.0, 0.0]);
        let d = m.observation_density(&s, &[0.0, 0.0], &h);
        let expect = 1.0 / ((2.0 * std::f64::consts::PI).powf(1.5) * 0.01 * 0.01 * 0.004);
        assert!((d - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn nonadditive_density_concentrates_as_noise_vanishes() {
        let variant = CarVariant {
            collision_dynamics: false,
            observation: ObservationKind::Nonadditive,
        };
        let s = [0.2, 0.3, 0.0, 0.1];
        let wide = CarModel::new(Environment::empty(), NoiseSpec::uniform(0.05), variant);
        let narrow = CarModel::new(Environment::empty(), NoiseSpec::uniform(0.001), variant);
        let h = narrow.nominal_observation(&s, &[0.0, 0.0]);
        assert!(
            narrow.observation_density(&s, &[0.0, 0.0], &h) > 100.0 * wide.observation_density(&s, &[0.0, 0.0], &h)
        );
        let mut off = h.clone();
        off[2] += 0.05;
        assert!(narrow.observation_density(&s, &[0.0, 0.0], &off) < 1e-6);
        // Deterministic per state.
        assert_eq!(
            wide.observation_density(&s, &[0.0, 0.0], &h),
            wide.observation_density(&s, &[1.0, 1.0], &h)
        );
    }

    #[test]
    fn zero_sensor_noise_is_a_point_mass() {
        let m = CarModel::new(Environment::empty(), NoiseSpec::new(0.01, 0.0), CarVariant::default());
        let s = [0.0, 0.0, 0.0, 0.1];
        let h = m.nominal_observation(&s, &[0.0, 0.0]);
        assert_eq!(m.observation_density(&s, &[0.0, 0.0], &h), 1.0);
        assert_eq!(m.observation_density(&s, &[0.0, 0.0], &[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn rewards_follow_the_task() {
        let m = CarModel::new(Environment::maze(), NoiseSpec::uniform(0.01), CarVariant::default());
        let free = Step::default();
        assert_eq!(m.reward(&START, &[0.0, 0.0], &[0.7, 0.7, 0.0, 0.0], free), 1000.0);
        assert_eq!(m.reward(&START, &[0.0, 0.0], &[-0.5, -0.7, 0.0, 0.0], free), -1.0);
        let hit = Step {
            collided: true,
            absorbed: true,
        };
        let inside = [0.0, -0.8, 0.0, 0.0];
        assert!(m.collides(&inside));
        assert_eq!(m.reward(&START, &[0.0, 0.0], &inside, hit), -500.0);
        assert!(m.is_terminal(&inside, hit));
        assert!(m.is_terminal(&[0.7, 0.7, 0.0, 0.0], free));
    }

    #[test]
    fn terminal_variant_absorbs_collisions_and_bounce_variant_does_not() {
        let s = [0.0, 0.0, 0.0, 0.1];
        let v = [0.0, 0.0];
        let mut out = [0.0; 4];
        let term = CarModel::new(wall(), NoiseSpec::uniform(0.0), CarVariant::default());
        let step = term.transition(&s, &[0.0, 0.0], &v, &mut out);
        assert!(step.collided && step.absorbed);
        let bounce = CarModel::new(
            wall(),
            NoiseSpec::uniform(0.0),
            CarVariant {
                collision_dynamics: true,
                ..Default::default()
            },
        );
        let step = bounce.transition(&s, &[0.0, 0.0], &v, &mut out);
        assert!(step.collided && !step.absorbed);
        assert!(close(&out, &[0.0, 0.0, 0.0, -0.2]));
        assert!(!bounce.is_terminal(&out, step));
    }

    #[test]
    fn heading_wraps_continuously_near_the_seam() {
        let s = car_step([0.0, 0.0, 3.13, 0.1], [0.0, 0.1], [0.0, 0.0], DT);
        assert!((-3.14..=3.14).contains(&s[2]));
        let turned = 3.13 + DT * 0.1f64.tan() / STEER_DIVISOR;
        assert!((s[2] - (turned - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_dynamics_are_bitwise_deterministic() {
        let mut rng = stream(3, &[]);
        let m = CarModel::new(Environment::maze(), NoiseSpec::uniform(0.0), CarVariant::default());
        for _ in 0..100 {
            let s = m.state_space().sample(&mut rng);
            let a = m.action_space().sample(&mut rng);
            assert_eq!(m.nominal_transition(&s, &a), m.nominal_transition(&s, &a));
        }
    }

    proptest! {
        #[test]
        fn transitions_stay_in_bounds(x in -1.0f64..1.0, y in -1.0f64..1.0, th in -3.14f64..3.14,
                                      vel in -0.2f64..0.2, acc in -1.0f64..1.0, st in -1.0f64..1.0, seed in 0u64..100) {
            let m = CarModel::new(Environment::maze(), NoiseSpec::uniform(0.075), CarVariant { collision_dynamics: seed % 2 == 0, ..Default::default() });
            let mut rng = stream(seed, &[]);
            let (next, _) = m.sample_transition(&[x, y, th, vel], &[acc, st], &mut rng);
            prop_assert!(m.state_space().contains(&next));
        }

        #[test]
        fn bounce_variant_matches_plain_dynamics_away_from_obstacles(x in -0.9f64..-0.5, y in 0.3f64..0.9, th in -3.14f64..3.14,
                                      vel in -0.2f64..0.2, acc in -1.0f64..1.0, st in -1.0f64..1.0) {
            // The upper-left region of the maze has no walls within reach of one step.
            let a = CarModel::new(Environment::maze(), NoiseSpec::uniform(0.0), CarVariant::default());
            let b = CarModel::new(Environment::maze(), NoiseSpec::uniform(0.0), CarVariant { collision_dynamics: true, ..Default::default() });
            prop_assert_eq!(a.nominal_transition(&[x, y, th, vel], &[acc, st]).0, b.nominal_transition(&[x, y, th, vel], &[acc, st]).0);
        }
    }
}
