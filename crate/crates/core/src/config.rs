//! Versioned experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{Method, TrialConfig};
use crate::error::{FcsError, Result};
use crate::fcs::CandidateGrid;
use crate::landscape::{generate_synthetic_landscape, load_landscape, FeatureMap, Landscape};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub length: usize,
    pub max_order: usize,
    pub coeff_sd: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            length: 10,
            max_order: 2,
            coeff_sd: vec![0.1, 0.04],
            noise_sd: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LandscapeSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub landscape: LandscapeSource,
    #[serde(default = "defaults::feature_order")]
    pub feature_order: usize,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default = "defaults::n")]
    pub n: Vec<usize>,
    #[serde(default = "defaults::lambda")]
    pub lambda: Vec<f64>,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<Method>,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub grid: Option<CandidateGrid>,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub calibration_size: Option<usize>,
    #[serde(default = "defaults::noise_scale")]
    pub noise_scale: f64,
    /// Sequence (as a 0/1 string) whose true fitness the set minimum is compared against.
    #[serde(default)]
    pub reference_sequence: Option<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

mod defaults {
    use crate::design::Method;

    pub fn feature_order() -> usize {
        2
    }
    pub fn n() -> Vec<usize> {
        vec![32]
    }
    pub fn lambda() -> Vec<f64> {
        vec![0.0, 2.0, 4.0]
    }
    pub fn methods() -> Vec<Method> {
        vec![Method::FcsFull]
    }
    pub fn alpha() -> f64 {
        0.1
    }
    pub fn gamma() -> f64 {
        1.0
    }
    pub fn trials() -> usize {
        100
    }
    pub fn noise_scale() -> f64 {
        1.0
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            landscape: LandscapeSource::Synthetic(SyntheticSpec::default()),
            feature_order: defaults::feature_order(),
            intercept: false,
            n: defaults::n(),
            lambda: defaults::lambda(),
            methods: defaults::methods(),
            alpha: defaults::alpha(),
            gamma: defaults::gamma(),
            grid: None,
            trials: defaults::trials(),
            seed: 0,
            calibration_size: None,
            noise_scale: defaults::noise_scale(),
            reference_sequence: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| FcsError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(FcsError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| FcsError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every field present, terminated by a newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn trial_configs(&self) -> Vec<TrialConfig> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &lambda in &self.lambda {
                out.push(TrialConfig {
                    n,
                    lambda,
                    gamma: self.gamma,
                    alpha: self.alpha,
                    grid: self.grid,
                    trials: self.trials,
                    method: self.methods[0],
                    seed: self.seed,
                    calibration_size: self.calibration_size,
                    noise_scale: self.noise_scale,
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(FcsError::Config(m.to_string()));
        if self.n.is_empty() {
            return cfg("`n` list is empty");
        }
        if self.lambda.is_empty() {
            return cfg("`lambda` list is empty");
        }
        if self.methods.is_empty() {
            return cfg("`methods` list is empty");
        }
        if self.trials == 0 {
            return cfg("`trials` must be positive");
        }
        if self.feature_order == 0 {
            return cfg("`feature_order` must be at least 1");
        }
        let mut seen = std::collections::HashSet::new();
        if !self.methods.iter().all(|m| seen.insert(*m)) {
            return cfg("`methods` lists a method twice");
        }
        for t in self.trial_configs() {
            t.validate()?;
        }
        Ok(())
    }

    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap::new(self.feature_order, self.intercept)
    }

    /// True fitness of the reference sequence, if one is configured.
    pub fn reference_fitness(&self, landscape: &Landscape) -> Result<Option<f64>> {
        let Some(seq) = &self.reference_sequence else {
            return Ok(None);
        };
        let index = (0..landscape.size())
            .find(|&i| crate::landscape::sequence_string(i, landscape.length()) == *seq)
            .ok_or_else(|| {
                FcsError::Config(format!(
                    "reference sequence `{seq}` is not in the landscape"
                ))
            })?;
        Ok(Some(landscape.fitness()[index]))
    }

    pub fn build_landscape(&self) -> Result<Landscape> {
        match &self.landscape {
            LandscapeSource::Path(p) => load_landscape(p, self.feature_map()),
            LandscapeSource::Synthetic(s) => {
                let synth = generate_synthetic_landscape(
                    s.length,
                    s.max_order,
                    &s.coeff_sd,
                    s.noise_sd,
                    s.seed,
                )?;
                synth.landscape.with_feature_map(self.feature_map())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"version": 1, "landscape": {"path": "x.csv"}}"#)
            .unwrap();
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.methods, vec![Method::FcsFull]);
        assert_eq!(cfg.landscape, LandscapeSource::Path("x.csv".into()));
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.grid = Some(CandidateGrid::new(0.0, 2.2, 0.02).unwrap());
        cfg.methods = vec![Method::FcsFull, Method::Staircase];
        let text = cfg.to_canonical_json();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(
            ExperimentConfig::from_json(&text)
                .unwrap()
                .to_canonical_json(),
            text
        );
    }

    #[test]
    fn version_and_unknown_fields_are_checked() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"version": 2, "landscape": {"path": "x"}}"#),
            Err(FcsError::Config(_))
        ));
        assert!(ExperimentConfig::from_json(
            r#"{"version": 1, "landscape": {"path": "x"}, "lamda": [1]}"#
        )
        .is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.n = vec![];
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn reference_sequence_resolves_to_its_fitness() {
        let mut cfg = ExperimentConfig::default();
        let landscape = cfg.build_landscape().unwrap();
        assert_eq!(cfg.reference_fitness(&landscape).unwrap(), None);
        cfg.reference_sequence = Some("0000000011".into());
        assert_eq!(
            cfg.reference_fitness(&landscape).unwrap(),
            Some(landscape.fitness()[3])
        );
        cfg.reference_sequence = Some("01".into());
        assert!(matches!(
            cfg.reference_fitness(&landscape),
            Err(FcsError::Config(_))
        ));
    }
}
