//! Weighted discrete distributions and their quantiles.
//!
//! A [`WeightedDiscreteDist`] is a finite set of support points with
//! probability masses. Equal support values are merged on construction so
//! every cumulative sum is taken over distinct atoms; ties therefore resolve
//! deterministically.
//!
//! Three quantile flavours are provided:
//!
//! * [`WeightedDiscreteDist::quantile`]: the smallest atom whose cumulative
//!   mass reaches `beta`.
//! * [`WeightedDiscreteDist::quantile_lower_bound`]: the smallest atom whose
//!   cumulative mass is still below `beta` but would reach it if the mass of
//!   the quantile atom were added, or negative infinity.
//! * [`WeightedDiscreteDist::randomized_quantile`]: the lower bound with
//!   probability `(QF - beta) / (QF - LF)` and the quantile otherwise, where
//!   `QF` and `LF` are the CDF at the quantile and at the lower bound.

use rand::Rng;

use crate::error::{FcsError, Result};

/// Allowed deviation of the supplied masses from a unit sum.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Slack used when comparing a cumulative mass against `beta`.
///
/// Masses such as `1/(n + 1)` do not sum exactly in binary floating point, so
/// `cum >= beta` is evaluated as `cum >= beta - CUMULATIVE_SLACK`.
pub const CUMULATIVE_SLACK: f64 = 1e-12;

/// `cum >= beta` up to [`CUMULATIVE_SLACK`].
#[inline]
pub fn reaches(cum: f64, beta: f64) -> bool {
    cum >= beta - CUMULATIVE_SLACK
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(FcsError::domain(format!(
            "beta must lie in (0, 1), got {beta}"
        )))
    }
}

/// Quantile, lower bound and the CDF at both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileParts {
    pub quantile: f64,
    /// `f64::NEG_INFINITY` when no atom qualifies.
    pub lower_bound: f64,
    /// CDF at the quantile.
    pub qf: f64,
    /// CDF at the lower bound (zero when the bound is negative infinity).
    pub lf: f64,
}

impl QuantileParts {
    /// Probability that the randomized quantile takes the lower bound.
    pub fn lower_bound_probability(&self, beta: f64) -> f64 {
        let denom = self.qf - self.lf;
        if denom <= 0.0 {
            return 0.0;
        }
        ((self.qf - beta) / denom).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDiscreteDist {
    atoms: Vec<f64>,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightedDiscreteDist {
    /// Builds a distribution from masses that already sum to one (within
    /// [`MASS_TOLERANCE`]). The masses are renormalized.
    pub fn new(support: &[f64], masses: &[f64]) -> Result<Self> {
        validate_shape(support, masses)?;
        for &m in masses {
            if !m.is_finite() || m < 0.0 {
                return Err(FcsError::input(format!(
                    "mass {m} is negative or not finite"
                )));
            }
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(FcsError::input(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(Self::build(support, masses, total))
    }

    /// Builds a distribution from nonnegative weights of arbitrary scale.
    pub fn from_weights(support: &[f64], weights: &[f64]) -> Result<Self> {
        validate_shape(support, weights)?;
        for &w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(FcsError::input(format!(
                    "weight {w} is negative or not finite"
                )));
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(FcsError::DegenerateWeights);
        }
        Ok(Self::build(support, weights, total))
    }

    /// Builds a distribution from log-weights, normalizing with log-sum-exp.
    /// `-inf` entries carry zero mass.
    pub fn from_log_weights(support: &[f64], log_weights: &[f64]) -> Result<Self> {
        validate_shape(support, log_weights)?;
        let masses = normalize_log_weights(log_weights)?;
        Ok(Self::build(support, &masses, 1.0))
    }

    fn build(support: &[f64], weights: &[f64], total: f64) -> Self {
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_by(|&a, &b| support[a].total_cmp(&support[b]));

        let mut atoms: Vec<f64> = Vec::with_capacity(support.len());
        let mut masses: Vec<f64> = Vec::with_capacity(support.len());
        for i in order {
            let m = weights[i] / total;
            match atoms.last() {
                Some(&last) if last == support[i] => *masses.last_mut().unwrap() += m,
                _ => {
                    atoms.push(support[i]);
                    masses.push(m);
                }
            }
        }
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for &m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        // the final atom carries the remaining mass exactly
        *cumulative.last_mut().unwrap() = 1.0;
        Self {
            atoms,
            masses,
            cumulative,
        }
    }

    /// Distinct support values in increasing order.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Aggregated mass of each distinct atom.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn cdf_at(&self, s: f64) -> f64 {
        let idx = self.atoms.partition_point(|&a| a <= s);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    fn quantile_index(&self, beta: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| reaches(c, beta))
            .unwrap_or(self.atoms.len() - 1)
    }

    pub fn quantile(&self, beta: f64) -> Result<f64> {
        check_beta(beta)?;
        Ok(self.atoms[self.quantile_index(beta)])
    }

    pub fn quantile_lower_bound(&self, beta: f64) -> Result<f64> {
        Ok(self.quantile_parts(beta)?.lower_bound)
    }

    pub fn quantile_parts(&self, beta: f64) -> Result<QuantileParts> {
        check_beta(beta)?;
        let q = self.quantile_index(beta);
        let mass_at_q = self.masses[q];
        let qf = self.cumulative[q];
        // Below every atom the CDF is zero, which qualifies as long as the
        // quantile atom alone carries enough mass.
        if reaches(mass_at_q, beta) {
            return Ok(QuantileParts {
                quantile: self.atoms[q],
                lower_bound: f64::NEG_INFINITY,
                qf,
                lf: 0.0,
            });
        }
        // k = q - 1 always qualifies, since cum[q-1] + mass[q] = cum[q].
        let k = (0..q)
            .find(|&k| reaches(self.cumulative[k] + mass_at_q, beta))
            .unwrap_or(q - 1);
        Ok(QuantileParts {
            quantile: self.atoms[q],
            lower_bound: self.atoms[k],
            qf,
            lf: self.cumulative[k],
        })
    }

    /// Randomized quantile driven by a caller-supplied uniform draw `u` in
    /// `[0, 1)`: the lower bound is returned when `u` falls below the
    /// lower-bound probability. Passing `u = 1.0` forces the quantile branch.
    pub fn randomized_quantile_with(&self, beta: f64, u: f64) -> Result<f64> {
        let parts = self.quantile_parts(beta)?;
        if u < parts.lower_bound_probability(beta) {
            Ok(parts.lower_bound)
        } else {
            Ok(parts.quantile)
        }
    }

    pub fn randomized_quantile<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> Result<f64> {
        let u: f64 = rng.random();
        self.randomized_quantile_with(beta, u)
    }
}

fn validate_shape(support: &[f64], masses: &[f64]) -> Result<()> {
    if support.is_empty() {
        return Err(FcsError::input(
            "distribution needs at least one support point",
        ));
    }
    if support.len() != masses.len() {
        return Err(FcsError::input(format!(
            "support has {} points but {} masses were given",
            support.len(),
            masses.len()
        )));
    }
    if support.iter().any(|s| s.is_nan()) {
        return Err(FcsError::input("support contains NaN"));
    }
    Ok(())
}

/// Turns log-weights into masses summing to one.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights
        .iter()
        .any(|l| l.is_nan() || *l == f64::INFINITY)
    {
        return Err(FcsError::numeric("log-likelihood ratio is NaN or +inf"));
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(FcsError::DegenerateWeights);
    }
    let mut masses: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = masses.iter().sum();
    for m in &mut masses {
        *m /= total;
    }
    Ok(masses)
}

/// `ln(sum(exp(values)))`, stable for large magnitudes.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}
