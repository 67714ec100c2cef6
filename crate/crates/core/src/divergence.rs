//! Finite probability vectors and the three f-divergences used throughout:
//! squared Hellinger, Kullback-Leibler and total variation.
//!
//! Logarithms are natural (KL in nats). `kl` signals a failure of absolute
//! continuity with `f64::INFINITY`, which the min/max arithmetic of the
//! estimation coefficients treats as an unattainable row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a probability vector.
pub const NORM_TOL: f64 = 1e-12;

/// Default cap on the size of any exhaustively enumerated space.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// A probability vector over `0..len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDist {
    weights: Vec<f64>,
}

impl FiniteDist {
    /// Normalizes `weights`; input already summing to one within
    /// [`NORM_TOL`] is kept bit-for-bit.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFiniteWeight { index });
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index, value: w });
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        if (total - 1.0).abs() <= NORM_TOL {
            return Ok(Self { weights });
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::IndexOutOfRange { what: "support", index, len: n });
        }
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Self::new(w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// `E[f]` under this distribution.
    pub fn expect(&self, values: &[f64]) -> Result<f64> {
        check_len(self.len(), values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
    }

    /// Inverse-CDF draw from a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_with(rng.random::<f64>())
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

impl TryFrom<Vec<f64>> for FiniteDist {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<FiniteDist> for Vec<f64> {
    fn from(d: FiniteDist) -> Self {
        d.weights
    }
}

/// Builds a distribution from raw non-negative weights.
pub fn make_dist(weights: &[f64]) -> Result<FiniteDist> {
    FiniteDist::new(weights.to_vec())
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `Σ (√p − √q)²`, in `[0, 2]`.
pub fn hellinger_sq(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let s: f64 = p
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok(s.clamp(0.0, 2.0))
}

/// `KL(p ‖ q)` in nats; `+∞` when `p` is not absolutely continuous w.r.t. `q`.
pub fn kl(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let mut s = 0.0;
    for (&a, &b) in p.weights.iter().zip(&q.weights) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        s += a * (a / b).ln();
    }
    Ok(s.max(0.0))
}

/// `Σ |p − q| / 2`, in `[0, 1]`.
pub fn tv(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let s: f64 = p
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// `p^{⊗n}` over n-tuples in lexicographic order (first coordinate most significant).
pub fn product_dist(p: &FiniteDist, n: usize, cap: usize) -> Result<FiniteDist> {
    if n == 0 {
        return Err(Error::NonPositiveArgument { name: "n", value: 0.0 });
    }
    let size = (p.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(Error::EnumerationCapExceeded { size, cap });
    }
    let mut out = vec![1.0];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * p.len());
        for &prefix in &out {
            next.extend(p.weights.iter().map(|w| prefix * w));
        }
        out = next;
    }
    FiniteDist::new(out)
}
