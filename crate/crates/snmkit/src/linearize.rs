//! First-order linearization of a POMDP's generative functions and the
//! extended Kalman filter built on it.

use nalgebra::{DMatrix, DVector};

use crate::pomdp::{angle_diff, GaussianBelief, PomdpModel};
use crate::rng::SimRng;
use crate::{Error, Result};

/// Relative finite-difference step, per unit of dimension width.
pub const FD_STEP: f64 = 1e-5;
/// Eigenvalue floor applied to every propagated covariance.
pub const COV_FLOOR: f64 = 1e-12;

/// Affine surrogate of a model around a reference (s̄, ā) with zero noise.
#[derive(Clone, Debug)]
pub struct LinearizedModel {
    pub s_ref: Vec<f64>,
    pub a_ref: Vec<f64>,
    /// ∂f/∂s, ∂f/∂a, ∂f/∂v.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// ∂h/∂s, ∂h/∂w.
    pub h: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub f0: Vec<f64>,
    pub h0: Vec<f64>,
}

fn check_finite(what: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::LinearizationFailure(format!("non-finite {what}")))
    }
}

/// Central differences of `g` with per-coordinate steps.
fn jacobian(x: &[f64], steps: &[f64], out_dim: usize, mut g: impl FnMut(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(out_dim, x.len());
    let mut xp = x.to_vec();
    let mut hi = vec![0.0; out_dim];
    let mut lo = vec![0.0; out_dim];
    for j in 0..x.len() {
        let h = steps[j];
        xp[j] = x[j] + h;
        g(&xp, &mut hi);
        xp[j] = x[j] - h;
        g(&xp, &mut lo);
        xp[j] = x[j];
        for i in 0..out_dim {
            jac[(i, j)] = (hi[i] - lo[i]) / (2.0 * h);
        }
    }
    jac
}

fn noise_steps(cov: &DMatrix<f64>) -> Vec<f64> {
    cov.diagonal()
        .iter()
        .map(|v| FD_STEP * v.max(0.0).sqrt().max(1.0))
        .collect()
}

fn offsets<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut f0 = vec![0.0; model.state_space().dim()];
    model.dynamics(s, a, &vec![0.0; model.transition_noise_dim()], &mut f0);
    let h0 = model.nominal_observation(s, a);
    if f0.iter().chain(&h0).any(|x| !x.is_finite()) {
        return Err(Error::LinearizationFailure(format!("non-finite model output at {s:?}")));
    }
    Ok((f0, h0))
}

/// Jacobians by central finite differences only, ignoring analytic ones.
pub fn linearize_at_numeric<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> Result<LinearizedModel> {
    let (f0, h0) = offsets(model, s, a)?;
    Ok(LinearizedModel {
        a: numeric_a(model, s, a),
        b: numeric_b(model, s, a),
        v: numeric_v(model, s, a),
        h: numeric_h(model, s, a),
        w: numeric_w(model, s, a),
        s_ref: s.to_vec(),
        a_ref: a.to_vec(),
        f0,
        h0,
    })
    .and_then(validated)
}

/// Linearization at (s̄, ā): analytic Jacobians where the model supplies
/// them, central finite differences otherwise.
pub fn linearize_at<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> Result<LinearizedModel> {
    let (f0, h0) = offsets(model, s, a)?;
    let (am, bm, vm) = match model.motion_jacobians(s, a) {
        Some(j) => j,
        None => (numeric_a(model, s, a), numeric_b(model, s, a), numeric_v(model, s, a)),
    };
    let (hm, wm) = match model.sensor_jacobians(s, a) {
        Some(j) => j,
        None => (numeric_h(model, s, a), numeric_w(model, s, a)),
    };
    validated(LinearizedModel {
        s_ref: s.to_vec(),
        a_ref: a.to_vec(),
        a: am,
        b: bm,
        v: vm,
        h: hm,
        w: wm,
        f0,
        h0,
    })
}

fn validated(lin: LinearizedModel) -> Result<LinearizedModel> {
    for (name, m) in [
        ("A", &lin.a),
        ("B", &lin.b),
        ("V", &lin.v),
        ("H", &lin.h),
        ("W", &lin.w),
    ] {
        check_finite(name, m)?;
    }
    Ok(lin)
}

fn numeric_a<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> DMatrix<f64> {
    let space = model.state_space();
    let steps: Vec<f64> = (0..space.dim()).map(|i| FD_STEP * space.width(i)).collect();
    let v = vec![0.0; model.transition_noise_dim()];
    jacobian(s, &steps, space.dim(), |x, out| model.dynamics(x, a, &v, out))
}

fn numeric_b<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> DMatrix<f64> {
    let space = model.action_space();
    let steps: Vec<f64> = (0..space.dim()).map(|i| FD_STEP * space.width(i)).collect();
    let v = vec![0.0; model.transition_noise_dim()];
    jacobian(a, &steps, model.state_space().dim(), |x, out| {
        model.dynamics(s, x, &v, out)
    })
}

fn numeric_v<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> DMatrix<f64> {
    let v = vec![0.0; model.transition_noise_dim()];
    let steps = noise_steps(&model.transition_noise_cov());
    jacobian(&v, &steps, model.state_space().dim(), |x, out| {
        model.dynamics(s, a, x, out)
    })
}

fn numeric_h<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> DMatrix<f64> {
    let space = model.state_space();
    let steps: Vec<f64> = (0..space.dim()).map(|i| FD_STEP * space.width(i)).collect();
    let w = vec![0.0; model.observation_noise_dim()];
    jacobian(s, &steps, model.observation_space().dim(), |x, out| {
        model.observe(x, a, &w, out)
    })
}

fn numeric_w<M: PomdpModel + ?Sized>(model: &M, s: &[f64], a: &[f64]) -> DMatrix<f64> {
    let w = vec![0.0; model.observation_noise_dim()];
    let steps = noise_steps(&model.observation_noise_cov());
    jacobian(&w, &steps, model.observation_space().dim(), |x, out| {
        model.observe(s, a, x, out)
    })
}

impl LinearizedModel {
    fn state_delta<M: PomdpModel + ?Sized>(&self, model: &M, s: &[f64]) -> DVector<f64> {
        let space = model.state_space();
        DVector::from_iterator(
            s.len(),
            (0..s.len()).map(|i| {
                if space.is_angular(i) {
                    angle_diff(s[i], self.s_ref[i])
                } else {
                    s[i] - self.s_ref[i]
                }
            }),
        )
    }

    /// f(s̄, ā, 0) + A(s − s̄) + B(a − ā) + V v, before bound handling.
    pub fn transition_affine<M: PomdpModel + ?Sized>(&self, model: &M, s: &[f64], a: &[f64], v: &[f64]) -> Vec<f64> {
        let ds = self.state_delta(model, s);
        let da = DVector::from_iterator(a.len(), a.iter().zip(&self.a_ref).map(|(x, r)| x - r));
        let dv = DVector::from_column_slice(v);
        let delta = &self.a * ds + &self.b * da + &self.v * dv;
        self.f0.iter().zip(delta.iter()).map(|(f, d)| f + d).collect()
    }

    /// h(s̄, 0) + H(s − s̄) + W w.
    pub fn observation_affine<M: PomdpModel + ?Sized>(&self, model: &M, s: &[f64], w: &[f64]) -> Vec<f64> {
        let ds = self.state_delta(model, s);
        let dw = DVector::from_column_slice(w);
        let delta = &self.h * ds + &self.w * dw;
        self.h0.iter().zip(delta.iter()).map(|(h, d)| h + d).collect()
    }

    /// Draw from the linearized transition, then wrap and clamp to the state
    /// bounds exactly as the true model does.
    pub fn sample_transition<M: PomdpModel + ?Sized>(
        &self,
        model: &M,
        s: &[f64],
        a: &[f64],
        rng: &mut SimRng,
    ) -> Vec<f64> {
        let mut v = vec![0.0; model.transition_noise_dim()];
        model.sample_transition_noise(rng, &mut v);
        let mut out = self.transition_affine(model, s, a, &v);
        model.state_space().project(&mut out);
        out
    }

    /// Draw from the linearized sensor. Observations are not clamped, in
    /// line with the true sensors.
    pub fn sample_observation<M: PomdpModel + ?Sized>(&self, model: &M, s: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let mut w = vec![0.0; model.observation_noise_dim()];
        model.sample_observation_noise(rng, &mut w);
        self.observation_affine(model, s, &w)
    }
}

/// Symmetrize and floor the eigenvalues at [`COV_FLOOR`].
pub fn regularize_cov(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.max(COV_FLOOR)));
    let out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// EKF time update with Jacobians at (mean, a).
pub fn ekf_predict<M: PomdpModel + ?Sized>(gb: &GaussianBelief, a: &[f64], model: &M) -> Result<GaussianBelief> {
    let mean: Vec<f64> = gb.mean.iter().copied().collect();
    let lin = linearize_at(model, &mean, a)?;
    let mut next = lin.f0.clone();
    model.state_space().project(&mut next);
    let cov = &lin.a * &gb.cov * lin.a.transpose() + &lin.v * model.transition_noise_cov() * lin.v.transpose();
    Ok(GaussianBelief::new(DVector::from_vec(next), regularize_cov(&cov)))
}

/// EKF measurement update with Jacobians at the prior mean.
pub fn ekf_update<M: PomdpModel + ?Sized>(
    gb: &GaussianBelief,
    a: &[f64],
    o: &[f64],
    model: &M,
) -> Result<GaussianBelief> {
    let mean: Vec<f64> = gb.mean.iter().copied().collect();
    let lin = linearize_at(model, &mean, a)?;
    let r = &lin.w * model.observation_noise_cov() * lin.w.transpose();
    let s = &lin.h * &gb.cov * lin.h.transpose() + r;
    let s = (&s + s.transpose()) * 0.5;
    let s_inv = s
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::FilterDegeneracy("innovation covariance is singular".into()))?;
    if s_inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::FilterDegeneracy("innovation covariance is singular".into()));
    }
    let k = &gb.cov * lin.h.transpose() * s_inv;
    let innovation = DVector::from_iterator(o.len(), o.iter().zip(&lin.h0).map(|(x, h)| x - h));
    let mut next: Vec<f64> = (&gb.mean + &k * innovation).iter().copied().collect();
    model.state_space().project(&mut next);
    let n = gb.cov.nrows();
    let cov = (DMatrix::identity(n, n) - &k * &lin.h) * &gb.cov;
    Ok(GaussianBelief::new(DVector::from_vec(next), regularize_cov(&cov)))
}

/// Track the belief along an action sequence assuming maximum-likelihood
/// observations at each predicted mean. Returns `actions.len() + 1` beliefs,
/// starting with `b0`.
pub fn kalman_track_trajectory<M: PomdpModel + ?Sized>(
    b0: &GaussianBelief,
    actions: &[Vec<f64>],
    model: &M,
) -> Result<Vec<GaussianBelief>> {
    let mut out = Vec::with_capacity(actions.len() + 1);
    out.push(b0.clone());
    let mut b = b0.clone();
    for a in actions {
        let pred = ekf_predict(&b, a, model)?;
        let mean: Vec<f64> = pred.mean.iter().copied().collect();
        let o = model.nominal_observation(&mean, a);
        b = ekf_update(&pred, a, &o, model)?;
        out.push(b.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CarModel, CarVariant, Environment, NoiseSpec, ObservationKind};
    use crate::pomdp::LinearGaussianModel;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn linear_model_jacobians_are_recovered() {
        let m = LinearGaussianModel::planar(0.05);
        let lin = linearize_at_numeric(&m, &[0.2, -0.3], &[1.0, 0.0]).unwrap();
        assert!((lin.a.clone() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-6);
        assert!((lin.b.clone() - DMatrix::<f64>::identity(2, 2) * 0.1).amax() < 1e-6);
        assert!((lin.v.clone() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-6);
    }

    #[test]
    fn heading_derivative_vanishes_at_zero_heading() {
        let m = CarModel::new(Environment::empty(), NoiseSpec::uniform(0.01), CarVariant::default());
        let lin = linearize_at(&m, &[0.0, 0.0, 0.0, 0.1], &[0.0, 0.0]).unwrap();
        assert_eq!(lin.a[(0, 2)], 0.0);
        let num = linearize_at_numeric(&m, &[0.0, 0.0, 0.0, 0.1], &[0.0, 0.0]).unwrap();
        assert!(num.a[(0, 2)].abs() < 1e-9);
    }

    #[test]
    fn analytic_and_numeric_jacobians_agree() {
        let mut rng = stream(11, &[]);
        for obs in [ObservationKind::Additive, ObservationKind::Nonadditive] {
            let m = CarModel::new(
                Environment::empty(),
                NoiseSpec::uniform(0.03),
                CarVariant {
                    collision_dynamics: false,
                    observation: obs,
                },
            );
            for _ in 0..100 {
                let mut s = m.state_space().sample(&mut rng);
                // Keep clear of the heading seam where the wrapped output jumps.
                s[2] *= 0.8;
                let a = m.action_space().sample(&mut rng);
                let ana = linearize_at(&m, &s, &a).unwrap();
                let num = linearize_at_numeric(&m, &s, &a).unwrap();
                for (x, y) in [
                    (&ana.a, &num.a),
                    (&ana.b, &num.b),
                    (&ana.v, &num.v),
                    (&ana.h, &num.h),
                    (&ana.w, &num.w),
                ] {
                    assert!((x - y).amax() < 1e-5, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn zero_noise_draw_at_reference_is_the_offset() {
        let m = CarModel::new(Environment::empty(), NoiseSpec::uniform(0.0), CarVariant::default());
        let s = [0.1, 0.2, 0.3, 0.1];
        let lin = linearize_at(&m, &s, &[1.0, -1.0]).unwrap();
        let mut rng = stream(1, &[]);
        assert_eq!(lin.sample_transition(&m, &s, &[1.0, -1.0], &mut rng), {
            let mut f = lin.f0.clone();
            m.state_space().project(&mut f);
            f
        });
    }

    #[test]
    fn linearized_sample_covariance_matches_v_sigma_vt() {
        let m = CarModel::new(Environment::empty(), NoiseSpec::uniform(0.05), CarVariant::default());
        let s = [0.0, 0.0, 0.5, 0.1];
        let a = [0.0, 0.3];
        let lin = linearize_at(&m, &s, &a).unwrap();
        let expect = &lin.v * m.transition_noise_cov() * lin.v.transpose();
        let mut rng = stream(2, &[]);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| lin.sample_transition(&m, &s, &a, &mut rng)).collect();
        for (i, j) in [(2, 2), (3, 3), (2, 3)] {
            let mi = draws.iter().map(|d| d[i]).sum::<f64>() / n as f64;
            let mj = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
            let prods: Vec<f64> = draws.iter().map(|d| (d[i] - mi) * (d[j] - mj)).collect();
            let c = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (c - expect[(i, j)]).abs() <= 3.0 * se + 1e-15,
                "({i},{j}): {c} vs {}",
                expect[(i, j)]
            );
        }
    }

    /// Hand-rolled scalar Kalman filter.
    fn kf_1d(mean: f64, var: f64, a: f64, u: f64, h: f64, q: f64, r: f64, o: f64) -> (f64, f64) {
        let (m, p) = (a * mean + u, a * a * var + q);
        let k = p * h / (h * h * p + r);
        (m + k * (o - h * m), (1.0 - k * h) * p)
    }

    #[test]
    fn ekf_on_a_linear_system_is_the_kalman_filter() {
        let m = LinearGaussianModel::scalar(0.9, 2.0, 0.3, 0.5);
        let mut gb = GaussianBelief::new(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 0.4));
        let (mut km, mut kv) = (1.0, 0.4);
        for (u, o) in [(1.0, 3.0), (0.0, 2.1), (-1.0, 0.2), (0.0, -0.5)] {
            gb = ekf_update(&ekf_predict(&gb, &[u], &m).unwrap(), &[u], &[o], &m).unwrap();
            (km, kv) = kf_1d(km, kv, 0.9, u, 2.0, 0.09, 0.25, o);
            assert!((gb.mean[0] - km).abs() < 1e-10);
            assert!((gb.cov[(0, 0)] - kv).abs() < 1e-10);
        }
    }

    #[test]
    fn predict_with_identity_and_no_noise_keeps_the_belief() {
        let m = LinearGaussianModel::scalar(1.0, 1.0, 0.0, 0.1);
        let gb = GaussianBelief::new(DVector::from_element(1, 0.3), DMatrix::from_element(1, 1, 0.2));
        let p = ekf_predict(&gb, &[0.0], &m).unwrap();
        assert!((p.mean[0] - 0.3).abs() < 1e-15);
        assert!((p.cov[(0, 0)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn very_noisy_sensor_leaves_the_prior() {
        let m = LinearGaussianModel::scalar(1.0, 1.0, 0.1, 1e4);
        let gb = GaussianBelief::new(DVector::from_element(1, 0.3), DMatrix::from_element(1, 1, 0.2));
        let u = ekf_update(&gb, &[0.0], &[5.0], &m).unwrap();
        assert!((u.mean[0] - 0.3).abs() < 1e-3);
        assert!((u.cov[(0, 0)] - 0.2).abs() < 1e-3);
    }

    #[test]
    fn noiseless_sensor_on_a_point_belief_is_degenerate() {
        let m = LinearGaussianModel::scalar(1.0, 1.0, 0.0, 0.0);
        let gb = GaussianBelief::new(DVector::from_element(1, 0.3), DMatrix::zeros(1, 1));
        assert!(matches!(
            ekf_update(&gb, &[0.0], &[0.3], &m),
            Err(Error::FilterDegeneracy(_))
        ));
    }

    #[test]
    fn trajectory_tracking_shapes_and_oracle() {
        let m = LinearGaussianModel::scalar(1.0, 1.0, 0.2, 0.3);
        let b0 = GaussianBelief::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0));
        let actions = vec![vec![1.0]; 5];
        let bs = kalman_track_trajectory(&b0, &actions, &m).unwrap();
        assert_eq!(bs.len(), 6);
        let (mut km, mut kv) = (0.0, 1.0);
        for b in &bs[1..] {
            // The ML observation equals the predicted mean, so the mean just follows the input.
            (km, kv) = kf_1d(km, kv, 1.0, 1.0, 1.0, 0.04, 0.09, km + 1.0);
            assert!((b.mean[0] - km).abs() < 1e-10 && (b.cov[(0, 0)] - kv).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_noise_tracking_collapses_the_covariance() {
        let m = CarModel::new(Environment::empty(), NoiseSpec::new(0.0, 1e-6), CarVariant::default());
        let b0 = GaussianBelief::new(
            DVector::from_vec(vec![-0.5, -0.5, 0.5, 0.1]),
            DMatrix::identity(4, 4) * 1e-6,
        );
        let actions = vec![vec![0.0, 0.0]; 4];
        let bs = kalman_track_trajectory(&b0, &actions, &m).unwrap();
        let mut s = vec![-0.5, -0.5, 0.5, 0.1];
        for b in &bs[1..] {
            s = m.nominal_transition(&s, &[0.0, 0.0]).0;
            assert!((b.mean.clone() - DVector::from_vec(s.clone())).amax() < 1e-9);
        }
        assert!(bs.last().unwrap().cov.trace() < bs[0].cov.trace());
    }

    proptest! {
        #[test]
        fn covariances_stay_symmetric_psd(seed in 0u64..64, ez in 0.001f64..0.1) {
            let m = CarModel::new(Environment::empty(), NoiseSpec::uniform(ez), CarVariant::default());
            let mut rng = stream(seed, &[]);
            let s = m.state_space().sample(&mut rng);
            let b0 = GaussianBelief::new(DVector::from_vec(s), DMatrix::identity(4, 4) * 1e-3);
            let actions: Vec<Vec<f64>> = (0..5).map(|i| m.actions()[(seed as usize + i) % 9].clone()).collect();
            for b in kalman_track_trajectory(&b0, &actions, &m).unwrap() {
                prop_assert!((&b.cov - b.cov.transpose()).amax() < 1e-9);
                prop_assert!(b.cov.clone().symmetric_eigen().eigenvalues.min() >= -1e-9);
            }
        }
    }
}
