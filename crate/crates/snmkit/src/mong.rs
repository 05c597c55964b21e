//! Measure of non-Gaussianity: negentropy of sampled transition and
//! observation distributions against their moment-matched Gaussians.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::pomdp::PomdpModel;
use crate::rng::SimRng;
use crate::snm::HistogramGrid;
use crate::{Error, Result};

const LN_2PI_E: f64 = 2.837_877_066_409_345_6; // ln(2πe)

/// Differential entropy of N(·, Σ) in nats. A singular Σ gives −∞.
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows();
    if n != cov.ncols() {
        return Err(Error::InvalidCovariance("matrix is not square".into()));
    }
    if (cov - cov.transpose()).amax() > 1e-9 * (1.0 + cov.amax()) {
        return Err(Error::InvalidCovariance("matrix is not symmetric".into()));
    }
    let eig = cov.clone().symmetric_eigen().eigenvalues;
    if let Some(bad) = eig.iter().find(|l| **l < -1e-9) {
        return Err(Error::InvalidCovariance(format!("negative eigenvalue {bad}")));
    }
    if eig.iter().any(|l| *l <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let log_det: f64 = eig.iter().map(|l| l.ln()).sum();
    Ok(0.5 * (n as f64 * LN_2PI_E + log_det))
}

/// Plug-in differential entropy −Σ pᵢ ln(pᵢ / volᵢ) over occupied bins.
/// Samples outside the grid still count toward n.
pub fn entropy_histogram(samples: &[Vec<f64>], grid: &HistogramGrid) -> f64 {
    let n = samples.len() as f64;
    let vol = grid.cell_volume();
    let (counts, _) = grid.counts(samples);
    counts
        .iter()
        .map(|&(_, c)| {
            let p = c as f64 / n;
            -p * (p / vol).ln()
        })
        .sum()
}

fn moments(samples: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(d);
    for x in samples {
        for k in 0..d {
            mean[k] += x[k];
        }
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for x in samples {
        for i in 0..d {
            let di = x[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (x[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= n;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    (mean, cov)
}

/// Negentropy with a caller-supplied grid: the entropy of the fitted
/// Gaussian minus [`entropy_histogram`].
pub fn negentropy_on_grid(samples: &[Vec<f64>], grid: &HistogramGrid) -> Result<f64> {
    let (_, cov) = moments(samples);
    Ok(gaussian_entropy(&cov)? - entropy_histogram(samples, grid))
}

/// Details of an adaptive negentropy estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyEstimate {
    /// Negentropy in nats, before any clamping.
    pub value: f64,
    /// Entropy estimate of the samples in the retained subspace.
    pub entropy: f64,
    pub samples: usize,
    /// Dimensions with nonzero spread that entered the estimate.
    pub dims: usize,
    pub bins: Vec<usize>,
}

/// Negentropy of a sample set with an automatically chosen grid.
///
/// The samples are whitened along the eigenvectors of their covariance,
/// which leaves negentropy unchanged and drops directions without spread.
/// Bins of about a quarter standard deviation, coarsened until there are
/// roughly ten samples per bin, tile the whitened sample range. The
/// histogram entropy gets the Miller–Madow correction, and the smoothing
/// bias of the grid is removed by evaluating the same grid on the exact
/// standard normal.
pub fn negentropy(samples: &[Vec<f64>]) -> EntropyEstimate {
    let n = samples.len();
    let empty = |dims| EntropyEstimate {
        value: 0.0,
        entropy: f64::NEG_INFINITY,
        samples: n,
        dims,
        bins: Vec::new(),
    };
    if n < 2 {
        return empty(0);
    }
    let (mean, cov) = moments(samples);
    let eig = cov.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * lmax && eig.eigenvalues[i] > 1e-30)
        .collect();
    let d = keep.len();
    if d == 0 {
        return empty(0);
    }
    let proj: Vec<DVector<f64>> = keep
        .iter()
        .map(|&i| eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt())
        .collect();
    let white: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| {
            let c = DVector::from_iterator(x.len(), x.iter().zip(mean.iter()).map(|(a, m)| a - m));
            proj.iter().map(|p| p.dot(&c)).collect()
        })
        .collect();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for y in &white {
        for k in 0..d {
            lo[k] = lo[k].min(y[k]);
            hi[k] = hi[k].max(y[k]);
        }
    }
    if (0..d).any(|k| hi[k] - lo[k] <= 0.0) {
        return empty(d);
    }
    let target = (n as f64 / 10.0).max(2f64.powi(d as i32));
    let mut h = 0.25;
    let bins = loop {
        let bins: Vec<usize> = (0..d).map(|k| (((hi[k] - lo[k]) / h).ceil() as usize).max(2)).collect();
        if bins.iter().map(|b| *b as f64).product::<f64>() <= target || bins.iter().all(|b| *b == 2) {
            break bins;
        }
        h *= 1.1;
    };
    let grid = HistogramGrid::new(lo.clone(), hi.clone(), bins.clone()).expect("positive ranges");
    let (counts, _) = grid.counts(&white);
    let vol = grid.cell_volume();
    let nf = n as f64;
    let plug_in: f64 = counts
        .iter()
        .map(|&(_, c)| {
            let p = c as f64 / nf;
            -p * (p / vol).ln()
        })
        .sum();
    let miller_madow = (counts.len() as f64 - 1.0) / (2.0 * nf);
    let std_normal = Normal::standard();
    let smoothing: f64 = (0..d)
        .map(|k| {
            let w = grid.bin_width(k);
            // Same bin width and phase, extended far into the tails.
            let first = lo[k] - ((lo[k] + 9.0) / w).ceil() * w;
            let count = ((9.0 - first) / w).ceil() as usize;
            let h_disc: f64 = (0..count)
                .map(|j| std_normal.cdf(first + (j + 1) as f64 * w) - std_normal.cdf(first + j as f64 * w))
                .filter(|p| *p > 0.0)
                .map(|p| -p * (p / w).ln())
                .sum();
            h_disc - 0.5 * LN_2PI_E
        })
        .sum();
    let entropy = plug_in + miller_madow - smoothing;
    EntropyEstimate {
        value: 0.5 * d as f64 * LN_2PI_E - entropy,
        entropy,
        samples: n,
        dims: d,
        bins,
    }
}

/// Raw transition and observation MoNG at one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MongComponents {
    pub transition: f64,
    pub observation: f64,
}

impl MongComponents {
    /// Reported values: small negative estimator noise clamped to zero.
    pub fn clamped(&self) -> MongComponents {
        MongComponents {
            transition: self.transition.max(0.0),
            observation: self.observation.max(0.0),
        }
    }
}

/// Maximum transition negentropy over `actions`, and the observation
/// negentropy at `s`. Collided (absorbed) transition samples are left out,
/// since the distribution of interest lives on the valid region.
pub fn mong_at<M: PomdpModel + ?Sized>(
    model: &M,
    s: &[f64],
    actions: &[Vec<f64>],
    n: usize,
    rng: &mut SimRng,
) -> MongComponents {
    let mut transition = f64::NEG_INFINITY;
    for a in actions {
        let mut kept = Vec::with_capacity(n);
        for _ in 0..n {
            let (next, step) = model.sample_transition(s, a, rng);
            if !step.absorbed {
                kept.push(next);
            }
        }
        transition = transition.max(negentropy(&kept).value);
    }
    let obs: Vec<Vec<f64>> = (0..n).map(|_| model.sample_observation(s, &actions[0], rng)).collect();
    MongComponents {
        transition,
        observation: negentropy(&obs).value,
    }
}
