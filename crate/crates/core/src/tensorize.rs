//! Curve ↔ flat vector layout and global z-score normalization.
//!
//! Flat index of frequency `t`, component `c` (0 = real, 1 = imag) and
//! element `e` (0..4 = Y11, Y12, Y21, Y22) is `t·8 + c·4 + e`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectra::{DqAdmittanceCurve, DqMatrix, FrequencyGrid};

/// Real vector of length `8·T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatSample(pub Vec<f64>);

impl FlatSample {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }
}

impl From<Vec<f64>> for FlatSample {
    fn from(v: Vec<f64>) -> Self {
        FlatSample(v)
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn flat_index(t: usize, component: usize, element: usize) -> usize {
    t * 8 + component * 4 + element
}

pub fn flatten(curve: &DqAdmittanceCurve) -> FlatSample {
    let mut out = Vec::with_capacity(curve.values().len() * 8);
    for m in curve.values() {
        out.extend(m.iter().map(|z| z.re));
        out.extend(m.iter().map(|z| z.im));
    }
    FlatSample(out)
}

pub fn unflatten(x: &FlatSample, grid: &FrequencyGrid) -> Result<DqAdmittanceCurve> {
    if x.len() != 8 * grid.len() {
        return Err(Error::Shape {
            expected: 8 * grid.len(),
            got: x.len(),
        });
    }
    let values: Vec<DqMatrix> =
        x.0.chunks_exact(8)
            .map(|c| {
                [
                    Complex64::new(c[0], c[4]),
                    Complex64::new(c[1], c[5]),
                    Complex64::new(c[2], c[6]),
                    Complex64::new(c[3], c[7]),
                ]
            })
            .collect();
    DqAdmittanceCurve::new(*grid, values)
}

/// Pooled scalar mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mu: f64,
    pub sigma: f64,
}

impl NormStats {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "norm stats need finite mu and sigma > 0, got ({mu}, {sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn identity() -> Self {
        Self {
            mu: 0.0,
            sigma: 1.0,
        }
    }
}

pub fn fit_norm<'a, I>(samples: I) -> Result<NormStats>
where
    I: IntoIterator<Item = &'a FlatSample>,
    I::IntoIter: Clone,
{
    let it = samples.into_iter();
    let mut count = 0usize;
    let mut sum = 0.0;
    for s in it.clone() {
        count += s.len();
        sum += s.0.iter().sum::<f64>();
    }
    if count == 0 {
        return Err(Error::Degenerate(
            "no values to fit normalization on".into(),
        ));
    }
    let mu = sum / count as f64;
    // Two-pass variance.
    let ss: f64 = it
        .map(|s| s.0.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>())
        .sum();
    let sigma = (ss / count as f64).sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Degenerate(format!(
            "pooled standard deviation is {sigma}; all values equal?"
        )));
    }
    Ok(NormStats { mu, sigma })
}

pub fn normalize(x: &FlatSample, n: &NormStats) -> FlatSample {
    FlatSample(x.0.iter().map(|v| (v - n.mu) / n.sigma).collect())
}

pub fn denormalize(x: &FlatSample, n: &NormStats) -> FlatSample {
    FlatSample(x.0.iter().map(|v| v * n.sigma + n.mu).collect())
}
