//! Running means of iterates and stepsizes, and q-suffix averages rebuilt from
//! two running-mean snapshots.
//!
//! The q-suffix window at cycle `k` is `j ∈ [⌊(1−q)k⌋, k−1]`, so its length
//! is `k − ⌊(1−q)k⌋ ≥ 1` for every `k ≥ 1` and `q ∈ (0, 1]`.

use crate::engine::StepsizeSchedule;
use crate::linalg::{CompensatedSum, CompensatedVecSum, Vector};
use crate::{Error, Result};

/// Start of the q-suffix window at cycle `k`.
pub fn suffix_start(q: f64, k: usize) -> usize {
    // The nudge keeps products like 0.9 * 10 from flooring to 8.
    let raw = ((1.0 - q) * k as f64 + 1e-9).floor() as usize;
    raw.min(k.saturating_sub(1))
}

pub fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("averaging parameter q must lie in (0, 1], got {q}")))
    }
}

/// Simple average of a vector stream, kept as a compensated sum.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingAverage {
    count: usize,
    sum: CompensatedVecSum,
}

impl StreamingAverage {
    pub fn new(n: usize) -> Self {
        Self {
            count: 0,
            sum: CompensatedVecSum::zeros(n),
        }
    }

    pub fn update(&mut self, value: &Vector) {
        self.sum.add(value);
        self.count += 1;
    }

    /// Consuming form of [`update`](Self::update).
    pub fn updated(mut self, value: &Vector) -> Self {
        self.update(value);
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Current mean; the zero vector before any update.
    pub fn mean(&self) -> Vector {
        if self.count == 0 {
            return Vector::zeros(self.sum.len());
        }
        self.sum.value() / self.count as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamingScalarAverage {
    count: usize,
    sum: CompensatedSum,
}

impl StreamingScalarAverage {
    pub fn update(&mut self, value: f64) {
        self.sum.add(value);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum.value() / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuffixAverage {
    pub q: f64,
    pub value: Vector,
    /// Cycle `ℓ = ⌊(1−q)k⌋` at which the prefix mean was captured.
    pub snapshot_cycle: usize,
    pub cycle: usize,
}

/// `(k · mean_full − ℓ · mean_prefix) / (k − ℓ)`: the mean of entries `ℓ..k`
/// given the means of entries `0..k` and `0..ℓ`.
pub fn suffix_from_snapshots(mean_full: &Vector, mean_prefix: &Vector, k: usize, l: usize) -> Result<Vector> {
    if l >= k {
        return Err(Error::InvalidInput(format!(
            "prefix cycle {l} must precede the current cycle {k}"
        )));
    }
    if l == 0 {
        return Ok(mean_full.clone());
    }
    let (kf, lf) = (k as f64, l as f64);
    Ok((mean_full * kf - mean_prefix * lf) / (kf - lf))
}

pub fn suffix_scalar_from_snapshots(mean_full: f64, mean_prefix: f64, k: usize, l: usize) -> Result<f64> {
    if l >= k {
        return Err(Error::InvalidInput(format!(
            "prefix cycle {l} must precede the current cycle {k}"
        )));
    }
    if l == 0 {
        return Ok(mean_full);
    }
    let (kf, lf) = (k as f64, l as f64);
    Ok((kf * mean_full - lf * mean_prefix) / (kf - lf))
}

/// Builds the [`SuffixAverage`] for parameter `q` at cycle `k`.
pub fn suffix_average(q: f64, mean_full: &Vector, mean_prefix: &Vector, k: usize) -> Result<SuffixAverage> {
    check_q(q)?;
    let l = suffix_start(q, k);
    Ok(SuffixAverage {
        q,
        value: suffix_from_snapshots(mean_full, mean_prefix, k, l)?,
        snapshot_cycle: l,
        cycle: k,
    })
}

/// `ᾱ_{q,k}`: exact mean of `α_j` over the q-suffix window at cycle `k`.
pub fn suffix_stepsize_average(schedule: &StepsizeSchedule, q: f64, k: usize) -> Result<f64> {
    check_q(q)?;
    if k == 0 {
        return Err(Error::InvalidInput("suffix stepsize average needs k >= 1".into()));
    }
    let l = suffix_start(q, k);
    let mut sum = CompensatedSum::default();
    for j in l..k {
        sum.add(schedule.alpha(j));
    }
    Ok(sum.value() / (k - l) as f64)
}
