//! Weighted split conformal intervals and randomized staircase sets.
//!
//! Calibration scores are `|y - μ(x)| / u(x)` for a fixed model. For a test
//! input the calibration points are weighted by their likelihood ratios and
//! the test point carries its own ratio at a score of `+inf`.
//!
//! The randomized set is a union of score bands between consecutive sorted
//! calibration scores, mirrored around the prediction. Every label inside a
//! band shares the same inclusion probability under the per-label randomized
//! quantile rule, so one Bernoulli draw per band realizes the set.

use rand::Rng;

use crate::error::{FcsError, Result};
use crate::fcs::{beta_of, FixedLikelihoodRatio};
use crate::quantile::reaches;

/// Fixed predictor with an optional per-input scale.
pub trait SplitModel<X: ?Sized>: Sync {
    fn predict(&self, x: &X) -> f64;

    fn uncertainty(&self, _x: &X) -> f64 {
        1.0
    }
}

impl SplitModel<[f64]> for crate::regression::RidgeModel {
    fn predict(&self, x: &[f64]) -> f64 {
        crate::regression::dot(&self.coefficients, x)
    }
}

/// Held-out labelled inputs.
#[derive(Debug, Clone)]
pub struct CalibrationSet<X> {
    pub inputs: Vec<X>,
    pub labels: Vec<f64>,
}

impl<X> CalibrationSet<X> {
    pub fn new(inputs: Vec<X>, labels: Vec<f64>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(FcsError::input(format!(
                "{} calibration inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if inputs.is_empty() {
            return Err(FcsError::input("calibration set is empty"));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Union of disjoint closed intervals, sorted; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StaircaseSet {
    intervals: Vec<(f64, f64)>,
}

impl StaircaseSet {
    /// Sorts and merges overlapping or touching intervals; drops inverted ones.
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Self {
        intervals.retain(|(a, b)| a <= b);
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self { intervals: merged }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= y && y <= b)
    }

    /// Total length; `0` when empty and `inf` when unbounded.
    pub fn size(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn min(&self) -> Option<f64> {
        self.intervals.first().map(|i| i.0)
    }

    pub fn is_subset_of_interval(&self, lo: f64, hi: f64) -> bool {
        self.intervals.iter().all(|&(a, b)| lo <= a && b <= hi)
    }
}

/// Score band `[lower, upper]` and the probability that its labels enter the set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub probability: f64,
}

/// Band probabilities for one test input.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseProfile {
    pub prediction: f64,
    pub scale: f64,
    pub bands: Vec<Band>,
}

impl StaircaseProfile {
    /// Realizes the set with one Bernoulli draw per band of fractional probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StaircaseSet {
        let mut pieces = Vec::new();
        for band in &self.bands {
            let keep = if band.probability >= 1.0 {
                true
            } else if band.probability <= 0.0 {
                false
            } else {
                rng.random::<f64>() < band.probability
            };
            if keep {
                let (lo, hi) = (band.lower * self.scale, band.upper * self.scale);
                pieces.push((self.prediction + lo, self.prediction + hi));
                pieces.push((self.prediction - hi, self.prediction - lo));
            }
        }
        StaircaseSet::new(pieces)
    }

    /// Inclusion probability of label `y`.
    pub fn probability_at(&self, y: f64) -> f64 {
        let s = (y - self.prediction).abs() / self.scale;
        self.bands
            .iter()
            .find(|b| b.lower < s && s < b.upper)
            .map_or(0.0, |b| b.probability)
    }
}

/// Calibration scores and ratios prepared for repeated queries.
#[derive(Debug, Clone)]
pub struct SplitCalibration {
    /// Distinct sorted scores.
    atoms: Vec<f64>,
    /// Prefix sums of `exp(log_ratio - offset)` over `atoms`.
    prefix: Vec<f64>,
    offset: f64,
}

impl SplitCalibration {
    pub fn new<X, M, W>(calibration: &CalibrationSet<X>, model: &M, ratio: &W) -> Result<Self>
    where
        M: SplitModel<X> + ?Sized,
        W: FixedLikelihoodRatio<X> + ?Sized,
    {
        let mut pairs = Vec::with_capacity(calibration.len());
        for (x, y) in calibration.inputs.iter().zip(&calibration.labels) {
            let u = checked_scale(model.uncertainty(x))?;
            let s = (y - model.predict(x)).abs() / u;
            if s.is_nan() {
                return Err(FcsError::numeric("calibration score is NaN"));
            }
            let lr = ratio.log_ratio(x);
            if lr.is_nan() || lr == f64::INFINITY {
                return Err(FcsError::numeric(format!("calibration log ratio is {lr}")));
            }
            pairs.push((s, lr));
        }
        let offset = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let offset = if offset.is_finite() { offset } else { 0.0 };
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::new();
        let mut prefix: Vec<f64> = Vec::new();
        let mut total = 0.0;
        for (s, lr) in pairs {
            total += (lr - offset).exp();
            if atoms.last() == Some(&s) {
                *prefix.last_mut().unwrap() = total;
            } else {
                atoms.push(s);
                prefix.push(total);
            }
        }
        Ok(Self {
            atoms,
            prefix,
            offset,
        })
    }

    /// Normalized cumulative calibration masses and the test mass.
    fn masses(&self, test_log_ratio: f64) -> Result<(Vec<f64>, f64)> {
        if test_log_ratio.is_nan() || test_log_ratio == f64::INFINITY {
            return Err(FcsError::numeric(format!(
                "test log ratio is {test_log_ratio}"
            )));
        }
        let cal = *self.prefix.last().unwrap();
        let test = (test_log_ratio - self.offset).exp();
        let total = cal + test;
        if !(total > 0.0) || !total.is_finite() {
            return Err(FcsError::DegenerateWeights);
        }
        let cum: Vec<f64> = self.prefix.iter().map(|c| c / total).collect();
        Ok((cum, test / total))
    }

    /// `1 - alpha` quantile of the weighted calibration scores with the test
    /// mass at `+inf`.
    pub fn score_quantile(&self, alpha: f64, test_log_ratio: f64) -> Result<f64> {
        let beta = beta_of(alpha)?;
        let (cum, _) = self.masses(test_log_ratio)?;
        let k = cum.partition_point(|&c| !reaches(c, beta));
        Ok(self.atoms.get(k).copied().unwrap_or(f64::INFINITY))
    }

    /// Inclusion probabilities for the bands between consecutive scores.
    pub fn band_probabilities(&self, alpha: f64, test_log_ratio: f64) -> Result<Vec<Band>> {
        let beta = beta_of(alpha)?;
        let (cal, w) = self.masses(test_log_ratio)?;
        let big_k = self.atoms.len();
        // c[0] = 0 stands for the empty prefix (the -inf candidate).
        let mut c = Vec::with_capacity(big_k + 1);
        c.push(0.0);
        c.extend_from_slice(&cal);
        let mass = |k: usize| c[k] - c[k - 1];
        // first k in 0..=upto with c[k] + m reaching beta
        let first_reaching =
            |upto: usize, m: f64| c[..=upto].partition_point(|&ck| !reaches(ck + m, beta));
        let prob = |i: usize| -> f64 {
            let ci = c[i];
            if reaches(ci, beta) {
                return 0.0;
            }
            if i == big_k || reaches(ci + w, beta) {
                // the test point is the quantile atom
                let qf = ci + w;
                let lf = c[first_reaching(i, w)];
                return 1.0 - lower_bound_probability(qf, lf, beta);
            }
            // a later calibration atom q is the quantile
            let q = i + 1 + c[i + 1..].partition_point(|&ck| !reaches(ck + w, beta));
            let mq = mass(q);
            if !reaches(ci + mq, beta) {
                return 1.0;
            }
            let lf = c[first_reaching(i, mq)];
            1.0 - lower_bound_probability(c[q] + w, lf, beta)
        };
        let mut bands = Vec::with_capacity(big_k + 1);
        let mut lower = 0.0;
        for i in 0..=big_k {
            let upper = if i < big_k {
                self.atoms[i]
            } else {
                f64::INFINITY
            };
            if upper > lower {
                bands.push(Band {
                    lower,
                    upper,
                    probability: prob(i),
                });
            }
            lower = upper.max(lower);
        }
        Ok(bands)
    }
}

fn lower_bound_probability(qf: f64, lf: f64, beta: f64) -> f64 {
    if qf <= lf {
        return 0.0;
    }
    ((qf - beta) / (qf - lf)).clamp(0.0, 1.0)
}

fn checked_scale(u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(FcsError::input(format!(
            "uncertainty must be positive and finite, got {u}"
        )));
    }
    Ok(u)
}

/// Weighted split conformal interval `μ(x) ± q·u(x)`.
pub fn split_conformal_interval<X, M, W>(
    calibration: &CalibrationSet<X>,
    model: &M,
    x_test: &X,
    alpha: f64,
    ratio: &W,
) -> Result<(f64, f64)>
where
    M: SplitModel<X> + ?Sized,
    W: FixedLikelihoodRatio<X> + ?Sized,
{
    let prep = SplitCalibration::new(calibration, model, ratio)?;
    interval_from(&prep, model, x_test, alpha, ratio)
}

pub(crate) fn interval_from<X, M, W>(
    prep: &SplitCalibration,
    model: &M,
    x_test: &X,
    alpha: f64,
    ratio: &W,
) -> Result<(f64, f64)>
where
    M: SplitModel<X> + ?Sized,
    W: FixedLikelihoodRatio<X> + ?Sized,
{
    let q = prep.score_quantile(alpha, ratio.log_ratio(x_test))?;
    let mu = model.predict(x_test);
    let u = checked_scale(model.uncertainty(x_test))?;
    Ok((mu - q * u, mu + q * u))
}

pub fn staircase_profile<X, M, W>(
    prep: &SplitCalibration,
    model: &M,
    x_test: &X,
    alpha: f64,
    ratio: &W,
) -> Result<StaircaseProfile>
where
    M: SplitModel<X> + ?Sized,
    W: FixedLikelihoodRatio<X> + ?Sized,
{
    let bands = prep.band_probabilities(alpha, ratio.log_ratio(x_test))?;
    let scale = checked_scale(model.uncertainty(x_test))?;
    Ok(StaircaseProfile {
        prediction: model.predict(x_test),
        scale,
        bands,
    })
}

/// Randomized split set with exact coverage.
pub fn randomized_staircase_set<X, M, W, R>(
    calibration: &CalibrationSet<X>,
    model: &M,
    x_test: &X,
    alpha: f64,
    ratio: &W,
    rng: &mut R,
) -> Result<StaircaseSet>
where
    M: SplitModel<X> + ?Sized,
    W: FixedLikelihoodRatio<X> + ?Sized,
    R: Rng + ?Sized,
{
    let prep = SplitCalibration::new(calibration, model, ratio)?;
    Ok(staircase_profile(&prep, model, x_test, alpha, ratio)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::WeightedDiscreteDist;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Constant(f64);

    impl SplitModel<f64> for Constant {
        fn predict(&self, _: &f64) -> f64 {
            self.0
        }
    }

    /// Calibration inputs double as their own log ratios.
    fn setup(scores: &[f64], log_ratios: &[f64]) -> (CalibrationSet<f64>, Constant) {
        let cal = CalibrationSet::new(log_ratios.to_vec(), scores.to_vec()).unwrap();
        (cal, Constant(0.0))
    }

    fn identity(x: &f64) -> f64 {
        *x
    }

    /// Per-label inclusion probability from the randomized weighted quantile.
    fn oracle_probability(scores: &[f64], lrs: &[f64], test_lr: f64, s: f64, beta: f64) -> f64 {
        let mut support = scores.to_vec();
        support.push(s);
        let mut lw = lrs.to_vec();
        lw.push(test_lr);
        let d = WeightedDiscreteDist::from_log_weights(&support, &lw).unwrap();
        let parts = d.quantile_parts(beta).unwrap();
        if s > parts.quantile {
            0.0
        } else if s <= parts.lower_bound {
            1.0
        } else {
            1.0 - parts.lower_bound_probability(beta)
        }
    }

    #[test]
    fn interval_uses_weighted_quantile() {
        let (cal, model) = setup(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]);
        // masses 0.2 each, test 0.2 at +inf; 0.8 quantile is 4
        let (lo, hi) = split_conformal_interval(&cal, &model, &0.0, 0.2, &identity).unwrap();
        assert_eq!((lo, hi), (-4.0, 4.0));
        let (lo, hi) = split_conformal_interval(&cal, &model, &0.0, 0.1, &identity).unwrap();
        assert_eq!((lo, hi), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn uncertainty_scales_interval_and_zero_is_rejected() {
        struct Scaled(f64);
        impl SplitModel<f64> for Scaled {
            fn predict(&self, _: &f64) -> f64 {
                1.0
            }
            fn uncertainty(&self, _: &f64) -> f64 {
                self.0
            }
        }
        let cal = CalibrationSet::new(vec![0.0; 4], vec![3.0, 5.0, 7.0, 9.0]).unwrap();
        let (lo, hi) = split_conformal_interval(&cal, &Scaled(2.0), &0.0, 0.2, &identity).unwrap();
        assert_eq!((lo, hi), (-7.0, 9.0));
        assert!(split_conformal_interval(&cal, &Scaled(0.0), &0.0, 0.2, &identity).is_err());
    }

    #[test]
    fn band_probabilities_on_a_worked_staircase() {
        // calibration masses 0.15, 0.15, 0.4 at scores 1, 2, 3; test mass 0.3; beta 0.4
        let lrs = [0.15f64.ln(), 0.15f64.ln(), 0.4f64.ln()];
        let (cal, model) = setup(&[1.0, 2.0, 3.0], &lrs);
        let prep = SplitCalibration::new(&cal, &model, &identity).unwrap();
        let bands = prep.band_probabilities(0.6, 0.3f64.ln()).unwrap();
        let probs: Vec<f64> = bands.iter().map(|b| b.probability).collect();
        let want = [1.0, 5.0 / 6.0, 5.0 / 9.0, 0.0];
        for (p, w) in probs.iter().zip(want) {
            assert!((p - w).abs() < 1e-12, "{probs:?}");
        }
    }

    #[test]
    fn heavy_calibration_atom_randomizes_below_the_test_mass() {
        // the quantile atom outweighs the test point, so labels just above the
        // lowest score are kept with probability one half
        let lrs = [0.05f64.ln(), 0.6f64.ln()];
        let (cal, model) = setup(&[1.0, 2.0], &lrs);
        let prep = SplitCalibration::new(&cal, &model, &identity).unwrap();
        let bands = prep.band_probabilities(0.5, 0.35f64.ln()).unwrap();
        assert!((bands[0].probability - 0.5).abs() < 1e-12);
        assert!(
            (oracle_probability(&[1.0, 2.0], &lrs, 0.35f64.ln(), 0.5, 0.5) - 0.5).abs() < 1e-12
        );
    }

    #[test]
    fn realizations_are_symmetric_and_inside_the_interval() {
        let scores: Vec<f64> = (1..=20).map(|i| i as f64 * 0.1).collect();
        let lrs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let (cal, model) = setup(&scores, &lrs);
        let test_lr = 0.4;
        let (lo, hi) = split_conformal_interval(&cal, &model, &test_lr, 0.2, &identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let set =
                randomized_staircase_set(&cal, &model, &test_lr, 0.2, &identity, &mut rng).unwrap();
            assert!(set.is_subset_of_interval(lo, hi));
            for &(a, b) in set.intervals() {
                assert!(set.contains(-a) && set.contains(-b));
            }
        }
    }

    #[test]
    fn nine_exchangeable_points_put_the_quantile_on_the_largest_score() {
        let scores: Vec<f64> = (1..=9).map(|i| i as f64 * 0.5).collect();
        let (cal, model) = setup(&scores, &[0.0; 9]);
        // cumulative masses 0.1, ..., 0.9 reach 0.9 at the ninth score
        let (lo, hi) = split_conformal_interval(&cal, &model, &0.0, 0.1, &identity).unwrap();
        assert_eq!((lo, hi), (-4.5, 4.5));
        let (lo, hi) = split_conformal_interval(&cal, &model, &0.0, 1e-9, &identity).unwrap();
        assert_eq!((lo, hi), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn staircase_size_of_empty_and_unbounded_sets() {
        assert_eq!(StaircaseSet::default().size(), 0.0);
        assert_eq!(StaircaseSet::new(vec![(0.0, 1.0), (2.0, 2.5)]).size(), 1.5);
        assert_eq!(
            StaircaseSet::new(vec![(f64::NEG_INFINITY, 0.0), (1.0, f64::INFINITY)]).size(),
            f64::INFINITY
        );
        let s = StaircaseSet::new(vec![(1.0, f64::INFINITY), (-2.0, 0.0), (-1.0, 0.5)]);
        assert_eq!(s.intervals(), &[(-2.0, 0.5), (1.0, f64::INFINITY)]);
        assert_eq!(s.size(), f64::INFINITY);
        assert_eq!(s.min(), Some(-2.0));
    }

    proptest! {
        #[test]
        fn bands_match_per_label_oracle(
            raw in prop::collection::vec((0.0f64..5.0, -2.0f64..2.0), 1..25),
            test_lr in -2.0f64..2.0,
            alpha in 0.05f64..0.95,
        ) {
            // snap scores to a coarse grid so ties occur
            let scores: Vec<f64> = raw.iter().map(|r| (r.0 * 4.0).round() / 4.0).collect();
            let lrs: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let (cal, model) = setup(&scores, &lrs);
            let prep = SplitCalibration::new(&cal, &model, &identity).unwrap();
            let bands = prep.band_probabilities(alpha, test_lr).unwrap();
            let beta = 1.0 - alpha;
            for b in &bands {
                let s = if b.upper.is_finite() { 0.5 * (b.lower + b.upper) } else { b.lower + 1.0 };
                let want = oracle_probability(&scores, &lrs, test_lr, s, beta);
                prop_assert!((b.probability - want).abs() < 1e-9, "band {:?} oracle {}", b, want);
            }
            // probabilities never increase with the score
            for w in bands.windows(2) {
                prop_assert!(w[1].probability <= w[0].probability + 1e-12);
            }
        }
    }
}
