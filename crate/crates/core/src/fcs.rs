//! Full conformal confidence sets over a label grid, weighted for feedback
//! covariate shift.
//!
//! For each candidate label `y` the training points are rescored against
//! `Z_{-i} ∪ {(x, y)}` and weighted by a likelihood ratio that is itself
//! evaluated on the augmented data. The candidate is kept when the test
//! score does not exceed the weighted `1 - alpha` quantile.
//!
//! Likelihood ratios are carried as natural logarithms throughout.

use std::str::FromStr;

use rand::Rng;

use crate::error::{FcsError, Result};
use crate::landscape::Landscape;
use crate::quantile::{check_beta, log_sum_exp, WeightedDiscreteDist};
use crate::regression::{augmented_loo_system, AugmentedLooSystem, Dataset, RidgeConfig};

/// Evenly spaced candidate labels `lo, lo + step, ...` not exceeding `hi`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CandidateGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl CandidateGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi < lo {
            return Err(FcsError::input(format!(
                "grid needs finite lo <= hi and step > 0, got {lo}:{hi}:{step}"
            )));
        }
        let grid = Self { lo, hi, step };
        if grid.len() > 1_000_000 {
            return Err(FcsError::input(format!(
                "grid {lo}:{hi}:{step} has more than 10^6 points"
            )));
        }
        Ok(grid)
    }

    /// Grid spanning the label range padded by a quarter on each side, with a
    /// step of one hundredth of the range.
    pub fn around_range(lo: f64, hi: f64) -> Result<Self> {
        let range = hi - lo;
        if !(range > 0.0) || !range.is_finite() {
            return Err(FcsError::input(format!(
                "cannot build a default grid over [{lo}, {hi}]"
            )));
        }
        Self::new(lo - 0.25 * range, hi + 0.25 * range, range / 100.0)
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.value(k))
    }
}

impl FromStr for CandidateGrid {
    type Err = FcsError;

    /// Parses `LO:HI:STEP`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || FcsError::input(format!("grid must look like LO:HI:STEP, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        Self::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

impl std::fmt::Display for CandidateGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.step)
    }
}

/// Subset of a candidate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfidenceSet {
    pub grid: CandidateGrid,
    pub included: Vec<bool>,
}

impl GridConfidenceSet {
    pub fn count(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.included.contains(&true)
    }

    /// Number of included grid points times the step.
    pub fn width(&self) -> f64 {
        self.count() as f64 * self.grid.step
    }

    pub fn included_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.included
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| self.grid.value(k))
    }

    pub fn min_value(&self) -> Option<f64> {
        self.included_values().next()
    }

    /// True when some included grid point lies within half a step of `y`.
    pub fn covers(&self, y: f64) -> bool {
        let half = 0.5 * self.grid.step * (1.0 + 1e-9);
        let k = ((y - self.grid.lo) / self.grid.step).round();
        if !k.is_finite() {
            return false;
        }
        let centre = k as i64;
        (centre - 1..=centre + 1).any(|k| {
            k >= 0
                && (k as usize) < self.included.len()
                && self.included[k as usize]
                && (self.grid.value(k as usize) - y).abs() <= half
        })
    }

    pub fn is_subset_of(&self, other: &GridConfidenceSet) -> bool {
        self.included
            .iter()
            .zip(&other.included)
            .all(|(&a, &b)| !a || b)
    }
}

/// Nonconformity score of `(x, y)` against a reference dataset.
pub trait ScoreFunction: Sync {
    fn score(&self, x: &[f64], y: f64, reference: &Dataset) -> f64;
}

impl<F> ScoreFunction for F
where
    F: Fn(&[f64], f64, &Dataset) -> f64 + Sync,
{
    fn score(&self, x: &[f64], y: f64, reference: &Dataset) -> f64 {
        self(x, y, reference)
    }
}

/// Log likelihood ratio `ln v(x; D)` of the test-input distribution induced
/// by `D` against the training-input distribution. `-inf` encodes a zero ratio.
pub trait LikelihoodRatioFunction: Sync {
    fn log_ratio(&self, x: &[f64], reference: &Dataset) -> f64;
}

impl<F> LikelihoodRatioFunction for F
where
    F: Fn(&[f64], &Dataset) -> f64 + Sync,
{
    fn log_ratio(&self, x: &[f64], reference: &Dataset) -> f64 {
        self(x, reference)
    }
}

/// Log likelihood ratio that does not depend on the data.
pub trait FixedLikelihoodRatio<X: ?Sized = [f64]>: Sync {
    fn log_ratio(&self, x: &X) -> f64;
}

impl<X: ?Sized, F> FixedLikelihoodRatio<X> for F
where
    F: Fn(&X) -> f64 + Sync,
{
    fn log_ratio(&self, x: &X) -> f64 {
        self(x)
    }
}

/// Ratio identically one.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitRatio;

impl LikelihoodRatioFunction for UnitRatio {
    fn log_ratio(&self, _: &[f64], _: &Dataset) -> f64 {
        0.0
    }
}

impl<X: ?Sized> FixedLikelihoodRatio<X> for UnitRatio {
    fn log_ratio(&self, _: &X) -> f64 {
        0.0
    }
}

/// Absolute residual of a ridge model fit on the reference data.
#[derive(Debug, Clone, Copy)]
pub struct ResidualScore {
    pub ridge: RidgeConfig,
}

impl ScoreFunction for ResidualScore {
    fn score(&self, x: &[f64], y: f64, reference: &Dataset) -> f64 {
        match crate::regression::fit_ridge(reference, self.ridge) {
            Ok(model) => (y - crate::regression::dot(&model.coefficients, x)).abs(),
            Err(_) => f64::NAN,
        }
    }
}

/// Inverse temperature of the design distribution `p(x) ∝ exp(λ μ(x))`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoltzmannDesign {
    pub lambda: f64,
}

/// Boltzmann design over a landscape, with the regression refit on the
/// reference data and uniform training inputs.
#[derive(Debug, Clone, Copy)]
pub struct BoltzmannRatio<'a> {
    pub landscape: &'a Landscape,
    pub design: BoltzmannDesign,
    pub ridge: RidgeConfig,
}

impl LikelihoodRatioFunction for BoltzmannRatio<'_> {
    fn log_ratio(&self, x: &[f64], reference: &Dataset) -> f64 {
        let lambda = self.design.lambda;
        let Ok(model) = crate::regression::fit_ridge(reference, self.ridge) else {
            return f64::NAN;
        };
        let Ok(all) = self.landscape.predict_all(&model.coefficients) else {
            return f64::NAN;
        };
        let norm = log_sum_exp(all.iter().map(|m| lambda * m));
        lambda * crate::regression::dot(&model.coefficients, x) - norm
            + (self.landscape.size() as f64).ln()
    }
}

/// Scores and log likelihood ratios for every grid label: row `k` holds the
/// `n` training entries followed by the test entry.
#[derive(Debug, Clone)]
pub struct ConformalTable {
    pub grid: CandidateGrid,
    points: usize,
    scores: Vec<f64>,
    log_ratios: Vec<f64>,
}

impl ConformalTable {
    pub fn new(
        grid: CandidateGrid,
        points: usize,
        scores: Vec<f64>,
        log_ratios: Vec<f64>,
    ) -> Result<Self> {
        let k = grid.len();
        if scores.len() != k * points || log_ratios.len() != k * points {
            return Err(FcsError::input(
                "conformal table dimensions do not match the grid",
            ));
        }
        if let Some(s) = scores.iter().find(|s| s.is_nan()) {
            return Err(FcsError::numeric(format!("nonconformity score is {s}")));
        }
        Ok(Self {
            grid,
            points,
            scores,
            log_ratios,
        })
    }

    /// Training points plus one.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn scores(&self, k: usize) -> &[f64] {
        &self.scores[k * self.points..(k + 1) * self.points]
    }

    pub fn log_ratios(&self, k: usize) -> &[f64] {
        &self.log_ratios[k * self.points..(k + 1) * self.points]
    }

    /// Normalized weights of row `k`.
    pub fn weights(&self, k: usize) -> Result<Vec<f64>> {
        crate::quantile::normalize_log_weights(self.log_ratios(k))
    }

    /// Weighted score distribution of row `k`, including the test point.
    pub fn distribution(&self, k: usize) -> Result<WeightedDiscreteDist> {
        WeightedDiscreteDist::from_log_weights(self.scores(k), self.log_ratios(k))
    }

    fn test_score(&self, k: usize) -> f64 {
        self.scores(k)[self.points - 1]
    }

    pub fn confidence_set(&self, alpha: f64) -> Result<GridConfidenceSet> {
        self.set_with(alpha, |_| 1.0)
    }

    /// Randomized set: each label draws its own uniform to pick between the
    /// quantile and its lower bound.
    pub fn randomized_set<R: Rng + ?Sized>(
        &self,
        alpha: f64,
        rng: &mut R,
    ) -> Result<GridConfidenceSet> {
        self.set_with(alpha, |_| rng.random::<f64>())
    }

    /// Randomized set driven by caller-supplied uniforms (one per grid label).
    pub fn set_with(
        &self,
        alpha: f64,
        mut uniform: impl FnMut(usize) -> f64,
    ) -> Result<GridConfidenceSet> {
        let beta = beta_of(alpha)?;
        let included = (0..self.grid.len())
            .map(|k| {
                let q = self
                    .distribution(k)?
                    .randomized_quantile_with(beta, uniform(k))?;
                Ok(self.test_score(k) <= q)
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok(GridConfidenceSet {
            grid: self.grid,
            included,
        })
    }
}

pub(crate) fn beta_of(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FcsError::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let beta = 1.0 - alpha;
    check_beta(beta)?;
    Ok(beta)
}

fn check_train(train: &Dataset, x_test: &[f64]) -> Result<()> {
    if train.is_empty() {
        return Err(FcsError::input(
            "full conformal needs at least one training point",
        ));
    }
    if x_test.len() != train.dim() {
        return Err(FcsError::input(format!(
            "test input has dimension {}, training inputs {}",
            x_test.len(),
            train.dim()
        )));
    }
    Ok(())
}

/// Table for a generic score and data-dependent likelihood ratio.
pub fn conformal_table(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    score: &dyn ScoreFunction,
    ratio: &dyn LikelihoodRatioFunction,
) -> Result<ConformalTable> {
    check_train(train, x_test)?;
    let n = train.len();
    let test_ratio = ratio.log_ratio(x_test, train);
    let mut scores = Vec::with_capacity(grid.len() * (n + 1));
    let mut log_ratios = Vec::with_capacity(grid.len() * (n + 1));
    for y in grid.values() {
        for i in 0..n {
            let reference = train.replace_with(i, x_test, y)?;
            scores.push(score.score(train.input(i), train.label(i), &reference));
            log_ratios.push(ratio.log_ratio(train.input(i), &reference));
        }
        scores.push(score.score(x_test, y, train));
        log_ratios.push(test_ratio);
    }
    ConformalTable::new(grid, n + 1, scores, log_ratios)
}

/// Full conformal set under feedback covariate shift.
pub fn full_conformal_set(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    alpha: f64,
    score: &dyn ScoreFunction,
    ratio: &dyn LikelihoodRatioFunction,
) -> Result<GridConfidenceSet> {
    conformal_table(train, x_test, grid, score, ratio)?.confidence_set(alpha)
}

/// Randomized variant of [`full_conformal_set`] with exact coverage.
pub fn randomized_full_conformal_set<R: Rng + ?Sized>(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    alpha: f64,
    score: &dyn ScoreFunction,
    ratio: &dyn LikelihoodRatioFunction,
    rng: &mut R,
) -> Result<GridConfidenceSet> {
    conformal_table(train, x_test, grid, score, ratio)?.randomized_set(alpha, rng)
}

/// Full conformal set with weights fixed in advance (standard covariate shift).
pub fn scs_full_conformal_set(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    alpha: f64,
    score: &dyn ScoreFunction,
    ratio: &dyn FixedLikelihoodRatio,
) -> Result<GridConfidenceSet> {
    let fixed = |x: &[f64], _: &Dataset| ratio.log_ratio(x);
    conformal_table(train, x_test, grid, score, &fixed)?.confidence_set(alpha)
}

/// Unweighted full conformal set: keeps `y` when the test score is at most
/// the `⌈(1 - alpha)(n + 1)⌉`-th smallest of the `n + 1` scores.
pub fn exchangeable_full_conformal_set(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    alpha: f64,
    score: &dyn ScoreFunction,
) -> Result<GridConfidenceSet> {
    let beta = beta_of(alpha)?;
    check_train(train, x_test)?;
    let n = train.len();
    let rank = ((beta * (n + 1) as f64) - 1e-9).ceil() as usize;
    let mut included = Vec::with_capacity(grid.len());
    for y in grid.values() {
        let mut all = Vec::with_capacity(n + 1);
        for i in 0..n {
            let reference = train.replace_with(i, x_test, y)?;
            all.push(score.score(train.input(i), train.label(i), &reference));
        }
        let test = score.score(x_test, y, train);
        all.push(test);
        all.sort_by(f64::total_cmp);
        included.push(test <= all[rank.clamp(1, n + 1) - 1]);
    }
    Ok(GridConfidenceSet { grid, included })
}

/// Which likelihood ratios a ridge conformal table uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Ratios recomputed on every augmented dataset.
    Feedback,
    /// Ratios from the design fit on the observed training data only.
    Standard,
    /// All ratios one.
    Unweighted,
}

/// Ridge residual scores with Boltzmann-design ratios, computed from the
/// augmented leave-one-out system instead of `n · |grid|` refits.
pub fn ridge_conformal_table(
    system: &AugmentedLooSystem,
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    design: BoltzmannDesign,
    landscape: &Landscape,
    weighting: Weighting,
) -> Result<ConformalTable> {
    check_train(train, x_test)?;
    let n = train.len();
    if system.len() != n {
        return Err(FcsError::input(
            "augmented system does not match the training data",
        ));
    }
    let lambda = design.lambda;
    if !lambda.is_finite() {
        return Err(FcsError::input(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let kk = grid.len();
    let points = n + 1;
    let mut scores = vec![0.0; kk * points];
    for (k, y) in grid.values().enumerate() {
        let row = &mut scores[k * points..(k + 1) * points];
        for i in 0..n {
            row[i] = (train.label(i) - system.prediction(i, y)).abs();
        }
        row[n] = (y - system.test_intercept).abs();
    }

    let log_size = (landscape.size() as f64).ln();
    let mut log_ratios = vec![0.0; kk * points];
    let fixed_row = |design_norm: f64| -> Vec<f64> {
        let beta = &system.full_model.coefficients;
        let mut row: Vec<f64> = (0..n)
            .map(|i| lambda * crate::regression::dot(beta, train.input(i)) - design_norm + log_size)
            .collect();
        row.push(lambda * system.test_intercept - design_norm + log_size);
        row
    };
    match weighting {
        Weighting::Unweighted => {}
        _ if lambda == 0.0 => {}
        Weighting::Standard => {
            let all = landscape.predict_all(&system.full_model.coefficients)?;
            let row = fixed_row(log_sum_exp(all.iter().map(|m| lambda * m)));
            for chunk in log_ratios.chunks_exact_mut(points) {
                chunk.copy_from_slice(&row);
            }
        }
        Weighting::Feedback => {
            let all = landscape.predict_all(&system.full_model.coefficients)?;
            let test_ratio = lambda * system.test_intercept
                - log_sum_exp(all.iter().map(|m| lambda * m))
                + log_size;
            for i in 0..n {
                let base = landscape.predict_all(&system.params[i])?;
                let slope = landscape.predict_all(&system.tails[i])?;
                let norms = boltzmann_log_normalizers(&base, &slope, lambda, grid);
                for (k, y) in grid.values().enumerate() {
                    log_ratios[k * points + i] =
                        lambda * system.prediction(i, y) - norms[k] + log_size;
                }
            }
            for k in 0..kk {
                log_ratios[k * points + n] = test_ratio;
            }
        }
    }
    ConformalTable::new(grid, points, scores, log_ratios)
}

/// `ln Σ_x exp(λ (base_x + y_k · slope_x))` for every grid label `y_k`.
///
/// Each term is advanced along the grid by a constant factor. Terms are
/// scaled by the largest exponent over both grid ends, which bounds every
/// exponent on the grid because each is linear in `y`. Labels whose sum
/// underflows are recomputed directly.
fn boltzmann_log_normalizers(
    base: &[f64],
    slope: &[f64],
    lambda: f64,
    grid: CandidateGrid,
) -> Vec<f64> {
    let kk = grid.len();
    let y_last = grid.value(kk - 1);
    let mut shift = f64::NEG_INFINITY;
    for (b, s) in base.iter().zip(slope) {
        let e0 = lambda * (b + grid.lo * s);
        let e1 = lambda * (b + y_last * s);
        shift = shift.max(e0).max(e1);
    }
    let mut term: Vec<f64> = base
        .iter()
        .zip(slope)
        .map(|(b, s)| (lambda * (b + grid.lo * s) - shift).exp())
        .collect();
    let factor: Vec<f64> = slope
        .iter()
        .map(|s| (lambda * grid.step * s).exp())
        .collect();
    let mut out = Vec::with_capacity(kk);
    for k in 0..kk {
        let sum = chunked_sum(&term);
        if sum.is_finite() && sum > 1e-250 {
            out.push(shift + sum.ln());
        } else {
            let y = grid.value(k);
            out.push(log_sum_exp(
                base.iter().zip(slope).map(|(b, s)| lambda * (b + y * s)),
            ));
        }
        for (t, f) in term.iter_mut().zip(&factor) {
            *t *= f;
        }
    }
    out
}

fn chunked_sum(values: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = values.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for j in 0..4 {
            acc[j] += c[j];
        }
    }
    acc.iter().sum::<f64>() + rest.iter().sum::<f64>()
}

/// Full conformal set for ridge regression under a Boltzmann design.
pub fn full_conformal_set_ridge(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    alpha: f64,
    ridge: RidgeConfig,
    design: BoltzmannDesign,
    landscape: &Landscape,
) -> Result<GridConfidenceSet> {
    ridge_set(
        train,
        x_test,
        grid,
        ridge,
        design,
        landscape,
        Weighting::Feedback,
    )?
    .confidence_set(alpha)
}

pub fn randomized_full_conformal_set_ridge<R: Rng + ?Sized>(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    alpha: f64,
    ridge: RidgeConfig,
    design: BoltzmannDesign,
    landscape: &Landscape,
    rng: &mut R,
) -> Result<GridConfidenceSet> {
    ridge_set(
        train,
        x_test,
        grid,
        ridge,
        design,
        landscape,
        Weighting::Feedback,
    )?
    .randomized_set(alpha, rng)
}

pub fn scs_full_conformal_set_ridge(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    alpha: f64,
    ridge: RidgeConfig,
    design: BoltzmannDesign,
    landscape: &Landscape,
) -> Result<GridConfidenceSet> {
    ridge_set(
        train,
        x_test,
        grid,
        ridge,
        design,
        landscape,
        Weighting::Standard,
    )?
    .confidence_set(alpha)
}

fn ridge_set(
    train: &Dataset,
    x_test: &[f64],
    grid: CandidateGrid,
    ridge: RidgeConfig,
    design: BoltzmannDesign,
    landscape: &Landscape,
    weighting: Weighting,
) -> Result<ConformalTable> {
    check_train(train, x_test)?;
    let system = augmented_loo_system(train, x_test, ridge)?;
    ridge_conformal_table(&system, train, x_test, grid, design, landscape, weighting)
}
