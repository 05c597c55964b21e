use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Axis-aligned box of admissible values for states, actions or observations.
///
/// Angular dimensions are wrapped onto the circle before being clamped to
/// their declared interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Space {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub angular: Vec<bool>,
}

impl Space {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound vectors differ in length");
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l < u),
            "every upper bound must exceed its lower bound"
        );
        let angular = vec![false; lower.len()];
        Space { lower, upper, angular }
    }

    pub fn with_angular(mut self, dim: usize) -> Self {
        self.angular[dim] = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn is_angular(&self, i: usize) -> bool {
        self.angular.get(i).copied().unwrap_or(false)
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= *l && *x <= *u)
    }

    /// Clamp every dimension into bounds, wrapping angles first.
    pub fn project(&self, v: &mut [f64]) {
        for (i, x) in v.iter_mut().enumerate() {
            if self.is_angular(i) {
                *x = wrap_angle(*x);
            }
            *x = x.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Affine map onto the unit cube. Out-of-bounds inputs are clamped and
    /// reported through the returned flag.
    pub fn normalize(&self, v: &[f64]) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let u = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let t = (x - self.lower[i]) / self.width(i);
                if !(0.0..=1.0).contains(&t) {
                    clamped = true;
                }
                t.clamp(0.0, 1.0)
            })
            .collect();
        (u, clamped)
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &t)| self.lower[i] + t * self.width(i))
            .collect()
    }

    /// Length of the metric embedding produced by [`Space::embed`].
    pub fn embed_dim(&self) -> usize {
        self.dim() + (0..self.dim()).filter(|&i| self.is_angular(i)).count()
    }

    /// Normalized coordinates with each angle replaced by a point on a circle
    /// of circumference one, so that small heading changes have the same scale
    /// as small normalized changes elsewhere and the wrap point is seamless.
    pub fn embed(&self, v: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (i, &x) in v.iter().enumerate() {
            if self.is_angular(i) {
                out.push(x.cos() / (2.0 * PI));
                out.push(x.sin() / (2.0 * PI));
            } else {
                out.push(((x - self.lower[i]) / self.width(i)).clamp(0.0, 1.0));
            }
        }
    }

    /// Uniform draw from the box.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }
}

/// Wrap an angle into [−π, π).
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Signed shortest angular difference a − b.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}
