//! Design-loop simulation: uniform training draws, Boltzmann test designs,
//! and the per-trial harness that builds every confidence-set variant.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FcsError, Result};
use crate::fcs::{
    ridge_conformal_table, BoltzmannDesign, CandidateGrid, GridConfidenceSet, Weighting,
};
use crate::landscape::Landscape;
use crate::quantile::log_sum_exp;
use crate::regression::{augmented_loo_system, Dataset, RidgeConfig};
use crate::split::{
    interval_from, staircase_profile, CalibrationSet, SplitCalibration, StaircaseSet,
};

/// Training inputs drawn uniformly with replacement, labelled with fresh noise.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub ids: Vec<usize>,
    pub data: Dataset,
}

fn noisy_label<R: Rng + ?Sized>(
    landscape: &Landscape,
    id: usize,
    noise_scale: f64,
    rng: &mut R,
) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    landscape.fitness()[id] + z * noise_scale * landscape.noise_sd()[id]
}

pub fn sample_training<R: Rng + ?Sized>(
    landscape: &Landscape,
    n: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<TrainingSample> {
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(FcsError::input(format!(
            "noise scale must be >= 0, got {noise_scale}"
        )));
    }
    let mut ids = Vec::with_capacity(n);
    let mut data = Dataset::empty(landscape.feature_dim());
    for _ in 0..n {
        let id = rng.random_range(0..landscape.size());
        let y = noisy_label(landscape, id, noise_scale, rng);
        data.push(landscape.features(id), y)?;
        ids.push(id);
    }
    Ok(TrainingSample { ids, data })
}

/// Normalized design distribution over the sequences of a landscape.
#[derive(Debug, Clone)]
pub struct DesignDistribution {
    log_masses: Vec<f64>,
    log_size: f64,
}

impl DesignDistribution {
    pub fn masses(&self) -> Vec<f64> {
        self.log_masses.iter().map(|l| l.exp()).collect()
    }

    pub fn log_masses(&self) -> &[f64] {
        &self.log_masses
    }

    /// `ln(p_design(x) / p_uniform(x))`.
    pub fn log_ratio(&self, id: usize) -> f64 {
        self.log_masses[id] + self.log_size
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let index = WeightedIndex::new(self.masses()).map_err(|e| {
            FcsError::numeric(format!("design distribution cannot be sampled: {e}"))
        })?;
        Ok(index.sample(rng))
    }
}

/// `p(x) ∝ exp(λ μ(x))` for the given per-sequence predictions.
pub fn boltzmann_distribution(
    predictions: &[f64],
    design: BoltzmannDesign,
) -> Result<DesignDistribution> {
    if predictions.is_empty() {
        return Err(FcsError::input(
            "design distribution needs at least one sequence",
        ));
    }
    if !design.lambda.is_finite() {
        return Err(FcsError::input(format!(
            "lambda must be finite, got {}",
            design.lambda
        )));
    }
    let energies: Vec<f64> = predictions.iter().map(|m| design.lambda * m).collect();
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(FcsError::numeric("design energies are not finite"));
    }
    let norm = log_sum_exp(energies.iter().copied());
    Ok(DesignDistribution {
        log_masses: energies.iter().map(|e| e - norm).collect(),
        log_size: (predictions.len() as f64).ln(),
    })
}

/// Boltzmann design for a fitted coefficient vector.
pub fn boltzmann_for_model(
    landscape: &Landscape,
    coefficients: &[f64],
    design: BoltzmannDesign,
) -> Result<DesignDistribution> {
    boltzmann_distribution(&landscape.predict_all(coefficients)?, design)
}

/// Keeps each proposal draw `id` with probability `r(id) / M`, where
/// `r = target / proposal`. With `bound = None`, `M` is the exact maximum of
/// `r` over the proposal's support. Target mass outside that support is lost.
pub fn rejection_sample<R: Rng + ?Sized>(
    target: &[f64],
    proposal: &[f64],
    draws: &[usize],
    bound: Option<f64>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if target.len() != proposal.len() {
        return Err(FcsError::input(
            "target and proposal must cover the same sequences",
        ));
    }
    let ratio = |id: usize| {
        if proposal[id] > 0.0 {
            target[id] / proposal[id]
        } else {
            0.0
        }
    };
    let m = match bound {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => {
            return Err(FcsError::input(format!(
                "rejection bound must be positive, got {m}"
            )))
        }
        None => (0..target.len()).map(ratio).fold(0.0, f64::max),
    };
    if !(m > 0.0) {
        return Err(FcsError::DegenerateWeights);
    }
    let mut kept = Vec::new();
    for &id in draws {
        if id >= target.len() {
            return Err(FcsError::input(format!(
                "draw {id} is outside the landscape"
            )));
        }
        let r = ratio(id);
        if r > m * (1.0 + 1e-12) {
            return Err(FcsError::input(format!(
                "rejection bound {m} underestimates the likelihood ratio {r} at sequence {id}"
            )));
        }
        if rng.random::<f64>() * m < r {
            kept.push(id);
        }
    }
    Ok(kept)
}

/// Confidence-set construction evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FcsFull,
    FcsRandomized,
    ScsFull,
    Split,
    Staircase,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FcsFull,
        Method::FcsRandomized,
        Method::ScsFull,
        Method::Split,
        Method::Staircase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FcsFull => "fcs_full",
            Method::FcsRandomized => "fcs_randomized",
            Method::ScsFull => "scs_full",
            Method::Split => "split",
            Method::Staircase => "staircase",
        }
    }

    /// True for methods whose sets live on the candidate grid.
    pub fn is_grid(self) -> bool {
        matches!(
            self,
            Method::FcsFull | Method::FcsRandomized | Method::ScsFull
        )
    }

    fn needs_calibration(self) -> bool {
        !self.is_grid()
    }
}

impl std::str::FromStr for Method {
    type Err = FcsError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| FcsError::input(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Defaults to [`CandidateGrid::around_range`] of the landscape fitness.
    pub grid: Option<CandidateGrid>,
    pub trials: usize,
    pub method: Method,
    pub seed: u64,
    /// Calibration size for split methods; defaults to `n`.
    pub calibration_size: Option<usize>,
    pub noise_scale: f64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(FcsError::input(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if !self.lambda.is_finite() {
            return Err(FcsError::input(format!(
                "lambda must be finite, got {}",
                self.lambda
            )));
        }
        RidgeConfig::new(self.gamma)?;
        crate::fcs::beta_of(self.alpha)?;
        if self.calibration_size == Some(0) {
            return Err(FcsError::input("calibration size must be positive"));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(FcsError::input(format!(
                "noise scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }

    pub fn grid_for(&self, landscape: &Landscape) -> Result<CandidateGrid> {
        match self.grid {
            Some(g) => Ok(g),
            None => {
                let (lo, hi) = landscape.fitness_range();
                CandidateGrid::around_range(lo, hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfidenceSet {
    Grid(GridConfidenceSet),
    Staircase(StaircaseSet),
}

impl ConfidenceSet {
    pub fn covers(&self, y: f64) -> bool {
        match self {
            ConfidenceSet::Grid(g) => g.covers(y),
            ConfidenceSet::Staircase(s) => s.contains(y),
        }
    }

    /// Grid width or total interval length.
    pub fn size(&self) -> f64 {
        match self {
            ConfidenceSet::Grid(g) => g.width(),
            ConfidenceSet::Staircase(s) => s.size(),
        }
    }

    /// Smallest included label, `None` for an empty set.
    pub fn min(&self) -> Option<f64> {
        match self {
            ConfidenceSet::Grid(g) => g.min_value(),
            ConfidenceSet::Staircase(s) => s.min(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridConfidenceSet> {
        match self {
            ConfidenceSet::Grid(g) => Some(g),
            ConfidenceSet::Staircase(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub n: usize,
    pub lambda: f64,
    pub test_id: usize,
    pub true_label: f64,
    pub predicted: f64,
    pub set: ConfidenceSet,
    pub covered: bool,
    pub size: f64,
}

const CALIBRATION_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

fn stream_rng(seed: u64, salt: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(trial as u64);
    rng
}

fn method_salt(method: Method) -> u64 {
    CALIBRATION_STREAM_SALT.wrapping_mul(2 + method as u64)
}

/// Runs `config.trials` trials of `config.method`.
pub fn run_trials(config: &TrialConfig, landscape: &Landscape) -> Result<Vec<TrialRecord>> {
    run_methods(config, &[config.method], landscape)
}

/// Runs every trial once and evaluates all `methods` on the same training
/// data and test point. Records are ordered by trial, then by `methods`.
///
/// Trial `k` draws its data from stream `k` of a generator seeded by
/// `config.seed`; the stream does not depend on `n`, `lambda` or the methods,
/// so sweeps share random numbers across settings.
pub fn run_methods(
    config: &TrialConfig,
    methods: &[Method],
    landscape: &Landscape,
) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let grid = config.grid_for(landscape)?;
    let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..config.trials)
        .into_par_iter()
        .map(|k| {
            run_one(config, methods, landscape, grid, k).map_err(|e| FcsError::Trial {
                trial: k,
                source: Box::new(e),
            })
        })
        .collect();
    let mut out = Vec::with_capacity(config.trials * methods.len());
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// One trial of [`run_methods`].
pub fn run_one(
    config: &TrialConfig,
    methods: &[Method],
    landscape: &Landscape,
    grid: CandidateGrid,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let ridge = RidgeConfig::new(config.gamma)?;
    let design = BoltzmannDesign {
        lambda: config.lambda,
    };
    let mut rng = stream_rng(config.seed, 0, trial);

    let train = sample_training(landscape, config.n, config.noise_scale, &mut rng)?;
    let model = crate::regression::fit_ridge(&train.data, ridge)?;
    let test_design = boltzmann_for_model(landscape, &model.coefficients, design)?;
    let test_id = test_design.sample(&mut rng)?;
    let true_label = noisy_label(landscape, test_id, config.noise_scale, &mut rng);
    let x_test = landscape.features(test_id);
    let predicted = crate::regression::dot(&model.coefficients, x_test);

    let needs_fcs = methods
        .iter()
        .any(|m| matches!(m, Method::FcsFull | Method::FcsRandomized));
    let system = if methods.iter().any(|m| m.is_grid()) {
        Some(augmented_loo_system(&train.data, x_test, ridge)?)
    } else {
        None
    };
    let fcs_table = match (&system, needs_fcs) {
        (Some(sys), true) => Some(ridge_conformal_table(
            sys,
            &train.data,
            x_test,
            grid,
            design,
            landscape,
            Weighting::Feedback,
        )?),
        _ => None,
    };

    let id_model = IdModel(&model.coefficients, landscape);
    let id_ratio = |id: &usize| test_design.log_ratio(*id);
    let split_prep = if methods.iter().any(|m| m.needs_calibration()) {
        let m = config.calibration_size.unwrap_or(config.n);
        let mut cal_rng = stream_rng(config.seed, CALIBRATION_STREAM_SALT, trial);
        let cal = sample_training(landscape, m, config.noise_scale, &mut cal_rng)?;
        let cal = CalibrationSet::new(cal.ids, cal.data.labels().to_vec())?;
        Some(SplitCalibration::new(&cal, &id_model, &id_ratio)?)
    } else {
        None
    };

    let mut records = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut method_rng = stream_rng(config.seed, method_salt(method), trial);
        let set = match method {
            Method::FcsFull => {
                ConfidenceSet::Grid(fcs_table.as_ref().unwrap().confidence_set(config.alpha)?)
            }
            Method::FcsRandomized => ConfidenceSet::Grid(
                fcs_table
                    .as_ref()
                    .unwrap()
                    .randomized_set(config.alpha, &mut method_rng)?,
            ),
            Method::ScsFull => {
                let table = ridge_conformal_table(
                    system.as_ref().unwrap(),
                    &train.data,
                    x_test,
                    grid,
                    design,
                    landscape,
                    Weighting::Standard,
                )?;
                ConfidenceSet::Grid(table.confidence_set(config.alpha)?)
            }
            Method::Split => {
                let (lo, hi) = interval_from(
                    split_prep.as_ref().unwrap(),
                    &id_model,
                    &test_id,
                    config.alpha,
                    &id_ratio,
                )?;
                ConfidenceSet::Staircase(StaircaseSet::new(vec![(lo, hi)]))
            }
            Method::Staircase => {
                let profile = staircase_profile(
                    split_prep.as_ref().unwrap(),
                    &id_model,
                    &test_id,
                    config.alpha,
                    &id_ratio,
                )?;
                ConfidenceSet::Staircase(profile.sample(&mut method_rng))
            }
        };
        let covered = set.covers(true_label);
        let size = set.size();
        records.push(TrialRecord {
            trial,
            method,
            n: config.n,
            lambda: config.lambda,
            test_id,
            true_label,
            predicted,
            set,
            covered,
            size,
        });
    }
    Ok(records)
}

/// Ridge model evaluated on landscape sequence ids.
struct IdModel<'a>(&'a [f64], &'a Landscape);

impl crate::split::SplitModel<usize> for IdModel<'_> {
    fn predict(&self, id: &usize) -> f64 {
        crate::regression::dot(self.0, self.1.features(*id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::generate_synthetic_landscape;

    fn landscape() -> Landscape {
        generate_synthetic_landscape(6, 2, &[0.5, 0.2], 0.1, 7)
            .unwrap()
            .landscape
    }

    fn config(method: Method) -> TrialConfig {
        TrialConfig {
            n: 12,
            lambda: 2.0,
            gamma: 1.0,
            alpha: 0.2,
            grid: None,
            trials: 6,
            method,
            seed: 99,
            calibration_size: Some(40),
            noise_scale: 1.0,
        }
    }

    #[test]
    fn noiseless_training_labels_equal_fitness() {
        let s = generate_synthetic_landscape(5, 2, &[0.5, 0.2], 0.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = sample_training(&s.landscape, 50, 1.0, &mut rng).unwrap();
        for (i, &id) in t.ids.iter().enumerate() {
            assert_eq!(t.data.label(i), s.landscape.fitness()[id]);
        }
        let again =
            sample_training(&s.landscape, 50, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(again.ids, t.ids);
        assert_eq!(again.data.labels(), t.data.labels());
    }

    #[test]
    fn label_noise_is_redrawn_per_sample() {
        // a two-position landscape keeps every sequence well sampled
        let l = Landscape::new(
            2,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.5; 4],
            crate::landscape::FeatureMap::new(1, false),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = sample_training(&l, 400_000, 1.0, &mut rng).unwrap();
        let labels: Vec<f64> = t
            .ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == 2)
            .map(|(i, _)| t.data.label(i))
            .collect();
        let mean = labels.iter().sum::<f64>() / labels.len() as f64;
        assert!(
            (mean - 3.0).abs() <= 3.0 * 0.5 / (labels.len() as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn boltzmann_lambda_zero_is_uniform() {
        let d = boltzmann_distribution(&[1.0, 5.0, -2.0, 0.0], BoltzmannDesign { lambda: 0.0 })
            .unwrap();
        for m in d.masses() {
            assert!((m - 0.25).abs() < 1e-15);
        }
        assert!(d.log_ratio(2).abs() < 1e-15);
    }

    #[test]
    fn boltzmann_masses_sum_to_one_and_favour_high_predictions() {
        let preds = [1.0, 2.0, 3.0];
        let d = boltzmann_distribution(&preds, BoltzmannDesign { lambda: 800.0 }).unwrap();
        let m = d.masses();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m[2] > 0.999_999);
    }

    #[test]
    fn rejection_with_equal_distributions_keeps_everything() {
        let p = [0.25; 4];
        let draws = [0, 1, 2, 3, 3, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let kept = rejection_sample(&p, &p, &draws, Some(1.0), &mut rng).unwrap();
        assert_eq!(kept, draws);
    }

    #[test]
    fn rejection_rejects_an_underestimated_bound() {
        let target = [0.7, 0.1, 0.1, 0.1];
        let proposal = [0.25; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = rejection_sample(&target, &proposal, &[0], Some(1.5), &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn point_mass_target_accepts_only_its_atom() {
        let mut target = [0.0; 5];
        target[3] = 1.0;
        let proposal = [0.2; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<usize> = (0..1000).map(|_| rng.random_range(0..5)).collect();
        let kept = rejection_sample(&target, &proposal, &draws, None, &mut rng).unwrap();
        assert!(!kept.is_empty());
        assert!(kept.iter().all(|&k| k == 3));
    }

    #[test]
    fn rejection_passes_a_chi_square_test() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let raw: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let total: f64 = raw.iter().sum();
        let target: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let proposal = vec![0.1; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws: Vec<usize> = (0..100_000).map(|_| rng.random_range(0..10)).collect();
        let kept = rejection_sample(&target, &proposal, &draws, None, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        kept.iter().for_each(|&k| counts[k] += 1);
        let n = kept.len() as f64;
        let stat: f64 = counts
            .iter()
            .zip(&target)
            .map(|(&c, t)| (c as f64 - n * t).powi(2) / (n * t))
            .sum();
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(stat);
        assert!(p > 0.001, "chi-square {stat}, p {p}");
    }

    #[test]
    fn rejection_reproduces_the_target() {
        let target = [0.1, 0.2, 0.3, 0.4];
        let proposal = [0.25; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<usize> = (0..400_000).map(|_| rng.random_range(0..4)).collect();
        let kept = rejection_sample(&target, &proposal, &draws, None, &mut rng).unwrap();
        for (id, t) in target.iter().enumerate() {
            let freq = kept.iter().filter(|&&k| k == id).count() as f64 / kept.len() as f64;
            assert!((freq - t).abs() < 0.005, "{id}: {freq}");
        }
    }

    #[test]
    fn trials_are_deterministic_and_order_independent() {
        let l = landscape();
        let cfg = config(Method::FcsFull);
        let a = run_trials(&cfg, &l).unwrap();
        let b = run_trials(&cfg, &l).unwrap();
        assert_eq!(a, b);
        let single = run_one(&cfg, &[Method::FcsFull], &l, cfg.grid_for(&l).unwrap(), 4).unwrap();
        assert_eq!(single[0], a[4]);
    }

    #[test]
    fn methods_share_training_data_and_test_point() {
        let l = landscape();
        let cfg = config(Method::FcsFull);
        let all = run_methods(&cfg, &Method::ALL, &l).unwrap();
        for chunk in all.chunks(Method::ALL.len()) {
            assert!(chunk
                .iter()
                .all(|r| r.test_id == chunk[0].test_id && r.true_label == chunk[0].true_label));
        }
        // adding methods does not change any method's own record
        let alone = run_trials(&config(Method::Staircase), &l).unwrap();
        let mixed: Vec<_> = all
            .iter()
            .filter(|r| r.method == Method::Staircase)
            .cloned()
            .collect();
        assert_eq!(alone, mixed);
    }

    #[test]
    fn zero_lambda_makes_fcs_and_scs_agree() {
        let l = landscape();
        let mut cfg = config(Method::FcsFull);
        cfg.lambda = 0.0;
        let all = run_methods(&cfg, &[Method::FcsFull, Method::ScsFull], &l).unwrap();
        for pair in all.chunks(2) {
            assert_eq!(pair[0].set, pair[1].set);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let l = landscape();
        let mut cfg = config(Method::Split);
        cfg.n = 1;
        assert!(run_trials(&cfg, &l).is_err());
        let mut cfg = config(Method::Split);
        cfg.alpha = 1.5;
        assert!(matches!(run_trials(&cfg, &l), Err(FcsError::Domain(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.name())
            );
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
