use crate::{Error, Result};

/// Smallest width given to a dimension whose samples all coincide.
pub const MIN_WIDTH: f64 = 1e-9;

/// Regular grid of axis-aligned bins.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    bins: Vec<usize>,
}

impl HistogramGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != bins.len() || lower.is_empty() {
            return Err(Error::InvalidArgument("grid dimensions disagree".into()));
        }
        for d in 0..lower.len() {
            if bins[d] < 2 {
                return Err(Error::InvalidArgument(format!("dimension {d} needs at least 2 bins")));
            }
            if !(lower[d].is_finite() && upper[d].is_finite() && upper[d] > lower[d]) {
                return Err(Error::InvalidArgument(format!(
                    "dimension {d} has bounds [{}, {}]",
                    lower[d], upper[d]
                )));
            }
        }
        Ok(HistogramGrid { lower, upper, bins })
    }

    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>, k: usize) -> Result<Self> {
        let n = lower.len();
        Self::new(lower, upper, vec![k; n])
    }

    /// Grid over the joint range of several sample sets, widened by 1% on
    /// each side. Dimensions without spread get a tiny width around the
    /// common value.
    pub fn spanning<'a, I>(sets: I, k: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [Vec<f64>]>,
    {
        let mut lower: Vec<f64> = Vec::new();
        let mut upper: Vec<f64> = Vec::new();
        for set in sets {
            for x in set {
                if lower.is_empty() {
                    lower = x.clone();
                    upper = x.clone();
                    continue;
                }
                for (d, v) in x.iter().enumerate() {
                    lower[d] = lower[d].min(*v);
                    upper[d] = upper[d].max(*v);
                }
            }
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("no samples to span".into()));
        }
        for d in 0..lower.len() {
            let pad = 0.01 * (upper[d] - lower[d]);
            lower[d] -= pad;
            upper[d] += pad;
            if upper[d] - lower[d] < MIN_WIDTH {
                let mid = 0.5 * (upper[d] + lower[d]);
                lower[d] = mid - 0.5 * MIN_WIDTH;
                upper[d] = mid + 0.5 * MIN_WIDTH;
            }
        }
        Self::uniform(lower, upper, k)
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn total_bins(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn bin_width(&self, d: usize) -> f64 {
        (self.upper[d] - self.lower[d]) / self.bins[d] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.bin_width(d)).product()
    }

    /// Flat bin index, or `None` outside the grid. The upper edge belongs to
    /// the last bin.
    pub fn bin_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for d in 0..self.dim() {
            let v = x[d];
            if !(v >= self.lower[d] && v <= self.upper[d]) {
                return None;
            }
            let k = self.bins[d];
            let b = (((v - self.lower[d]) / (self.upper[d] - self.lower[d])) * k as f64) as usize;
            idx = idx * k + b.min(k - 1);
        }
        Some(idx)
    }

    /// Occupied bins as sorted (index, count) pairs, plus the number of
    /// samples outside the grid.
    pub fn counts(&self, samples: &[Vec<f64>]) -> (Vec<(usize, usize)>, usize) {
        let mut outside = 0;
        let total = self.total_bins();
        if total <= (1 << 16).max(4 * samples.len()) {
            let mut dense = vec![0usize; total];
            for x in samples {
                match self.bin_of(x) {
                    Some(i) => dense[i] += 1,
                    None => outside += 1,
                }
            }
            let occupied = dense.into_iter().enumerate().filter(|(_, c)| *c > 0).collect();
            return (occupied, outside);
        }
        let mut idx: Vec<usize> = Vec::with_capacity(samples.len());
        for x in samples {
            match self.bin_of(x) {
                Some(i) => idx.push(i),
                None => outside += 1,
            }
        }
        idx.sort_unstable();
        let mut occupied: Vec<(usize, usize)> = Vec::new();
        for i in idx {
            match occupied.last_mut() {
                Some((j, c)) if *j == i => *c += 1,
                _ => occupied.push((i, 1)),
            }
        }
        (occupied, outside)
    }
}

/// Histogram estimate of the total-variation distance, ½ Σ |pᵢ − qᵢ|.
pub fn tv_histogram(p: &[Vec<f64>], q: &[Vec<f64>], grid: &HistogramGrid) -> f64 {
    tv_histogram_with_sink(p, 0, q, 0, grid)
}

/// [`tv_histogram`] where each distribution may also place mass on an extra
/// "sink" outcome, given as a sample count. Samples outside the grid are
/// pooled into one more shared bin.
pub fn tv_histogram_with_sink(
    p: &[Vec<f64>],
    p_sink: usize,
    q: &[Vec<f64>],
    q_sink: usize,
    grid: &HistogramGrid,
) -> f64 {
    let np = (p.len() + p_sink) as f64;
    let nq = (q.len() + q_sink) as f64;
    assert!(np > 0.0 && nq > 0.0, "TV needs nonempty sample sets");
    let (cp, op) = grid.counts(p);
    let (cq, oq) = grid.counts(q);
    let mut sum = (p_sink as f64 / np - q_sink as f64 / nq).abs() + (op as f64 / np - oq as f64 / nq).abs();
    let (mut i, mut j) = (0, 0);
    while i < cp.len() || j < cq.len() {
        let (bi, bj) = (
            cp.get(i).map_or(usize::MAX, |x| x.0),
            cq.get(j).map_or(usize::MAX, |x| x.0),
        );
        if bi == bj {
            sum += (cp[i].1 as f64 / np - cq[j].1 as f64 / nq).abs();
            i += 1;
            j += 1;
        } else if bi < bj {
            sum += cp[i].1 as f64 / np;
            i += 1;
        } else {
            sum += cq[j].1 as f64 / nq;
            j += 1;
        }
    }
    (0.5 * sum).clamp(0.0, 1.0)
}
