use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{MotionJacobians, PomdpModel, SensorJacobians, Space, Step};
use crate::rng::SimRng;

/// Linear-Gaussian system s′ = A s + B a + v, o = H s + w with
/// v ~ N(0, Σ_v), w ~ N(0, Σ_w). Its linearization is exact, which makes it
/// the null case for the non-linearity measures.
#[derive(Clone, Debug)]
pub struct LinearGaussianModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DMatrix<f64>,
    sigma_v: DMatrix<f64>,
    sigma_w: DMatrix<f64>,
    chol_v: DMatrix<f64>,
    chol_w: DMatrix<f64>,
    state_space: Space,
    action_space: Space,
    observation_space: Space,
    actions: Vec<Vec<f64>>,
    discount: f64,
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()));
    &eig.eigenvectors * d
}

impl LinearGaussianModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        h: DMatrix<f64>,
        sigma_v: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        state_space: Space,
        action_space: Space,
        actions: Vec<Vec<f64>>,
    ) -> Self {
        let l = h.nrows();
        let observation_space = Space::new(vec![-1e6; l], vec![1e6; l]);
        LinearGaussianModel {
            chol_v: sqrt_psd(&sigma_v),
            chol_w: sqrt_psd(&sigma_w),
            a,
            b,
            h,
            sigma_v,
            sigma_w,
            state_space,
            action_space,
            observation_space,
            actions,
            discount: 0.95,
        }
    }

    /// 1D random walk x′ = a·x + u + v, o = h·x + w.
    pub fn scalar(a: f64, h: f64, sigma_v: f64, sigma_w: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, h),
            DMatrix::from_element(1, 1, sigma_v * sigma_v),
            DMatrix::from_element(1, 1, sigma_w * sigma_w),
            Space::new(vec![-1e3], vec![1e3]),
            Space::new(vec![-1.0], vec![1.0]),
            vec![vec![-1.0], vec![0.0], vec![1.0]],
        )
    }

    /// Planar single integrator with 9 velocity commands of size 0.1 per step
    /// and isotropic noise of standard deviation `sigma`. The state bounds
    /// [−100, 100]² are far enough away that clamping practically never acts.
    pub fn planar(sigma: f64) -> Self {
        let mut actions = Vec::new();
        for ax in [-1.0, 0.0, 1.0] {
            for ay in [-1.0, 0.0, 1.0] {
                actions.push(vec![ax, ay]);
            }
        }
        let i2 = DMatrix::identity(2, 2);
        Self::new(
            i2.clone(),
            &i2 * 0.1,
            i2.clone(),
            &i2 * (sigma * sigma),
            &i2 * (sigma * sigma),
            Space::new(vec![-100.0, -100.0], vec![100.0, 100.0]),
            Space::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            actions,
        )
    }

    pub fn with_discount(mut self, gamma: f64) -> Self {
        self.discount = gamma;
        self
    }

    fn sample(chol: &DMatrix<f64>, rng: &mut SimRng, out: &mut [f64]) {
        let z: Vec<f64> = (0..chol.ncols()).map(|_| StandardNormal.sample(rng)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..chol.ncols()).map(|j| chol[(i, j)] * z[j]).sum();
        }
    }
}

impl PomdpModel for LinearGaussianModel {
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
        self.a.nrows()
    }
    fn observation_noise_dim(&self) -> usize {
        self.h.nrows()
    }
    fn transition_noise_cov(&self) -> DMatrix<f64> {
        self.sigma_v.clone()
    }
    fn observation_noise_cov(&self) -> DMatrix<f64> {
        self.sigma_w.clone()
    }
    fn sample_transition_noise(&self, rng: &mut SimRng, v: &mut [f64]) {
        Self::sample(&self.chol_v, rng, v);
    }
    fn sample_observation_noise(&self, rng: &mut SimRng, w: &mut [f64]) {
        Self::sample(&self.chol_w, rng, w);
    }
    fn dynamics(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            let mut x = v[i];
            for j in 0..n {
                x += self.a[(i, j)] * s[j];
            }
            for j in 0..self.b.ncols() {
                x += self.b[(i, j)] * a[j];
            }
            out[i] = x;
        }
    }
    fn transition(&self, s: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) -> Step {
        self.dynamics(s, a, v, out);
        self.state_space.project(out);
        Step::default()
    }
    fn observe(&self, s: &[f64], _a: &[f64], w: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = w[i] + (0..s.len()).map(|j| self.h[(i, j)] * s[j]).sum::<f64>();
        }
    }
    fn observation_density(&self, s: &[f64], a: &[f64], o: &[f64]) -> f64 {
        let mut mean = vec![0.0; o.len()];
        self.observe(s, a, &vec![0.0; o.len()], &mut mean);
        let r = DVector::from_iterator(o.len(), o.iter().zip(&mean).map(|(x, m)| x - m));
        gaussian_density(&r, &self.sigma_w)
    }
    fn reward(&self, _s: &[f64], _a: &[f64], _next: &[f64], _step: Step) -> f64 {
        -1.0
    }
    fn is_terminal(&self, _s: &[f64], _step: Step) -> bool {
        false
    }
    fn discount(&self) -> f64 {
        self.discount
    }
    fn motion_jacobians(&self, _s: &[f64], _a: &[f64]) -> Option<MotionJacobians> {
        let n = self.a.nrows();
        Some((self.a.clone(), self.b.clone(), DMatrix::identity(n, n)))
    }
    fn sensor_jacobians(&self, _s: &[f64], _a: &[f64]) -> Option<SensorJacobians> {
        let l = self.h.nrows();
        Some((self.h.clone(), DMatrix::identity(l, l)))
    }
}

/// N(r; 0, Σ). A singular Σ falls back to a point mass: density 1 when the
/// residual vanishes (to 1e−9), 0 otherwise.
pub fn gaussian_density(r: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let k = r.len() as f64;
    match cov.clone().cholesky() {
        Some(ch) => {
            let det: f64 = ch.l().diagonal().iter().map(|d| d * d).product();
            if det <= 0.0 {
                return point_mass(r);
            }
            let q = r.dot(&ch.solve(r));
            (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(k) * det).sqrt()
        }
        None => point_mass(r),
    }
}

fn point_mass(r: &DVector<f64>) -> f64 {
    if r.amax() <= 1e-9 {
        1.0
    } else {
        0.0
    }
}
