//! Enumerable fitness landscapes over signed-bit sequences.
//!
//! Sequence `k` (for `0 <= k < 2^L`) has position `j` equal to `+1` when bit
//! `L - 1 - j` of `k` is set and `-1` otherwise, so the CSV string of a
//! sequence reads as the binary expansion of its index.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FcsError, Result};

/// Largest sequence length whose space is normalized by exact enumeration.
pub const MAX_LENGTH: usize = 16;

/// Comment line written ahead of the landscape CSV header.
pub const LANDSCAPE_SCHEMA: &str = "# fcs-landscape v1";

/// Interaction featurization: products of up to `order` distinct positions,
/// optionally preceded by a constant column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureMap {
    pub order: usize,
    #[serde(default)]
    pub intercept: bool,
}

impl FeatureMap {
    pub fn new(order: usize, intercept: bool) -> Self {
        Self { order, intercept }
    }

    /// Position subsets (as bitmasks over index bits) in feature-column order:
    /// by interaction order, then lexicographically by position.
    pub fn subsets(&self, length: usize) -> Vec<u32> {
        let mut out = Vec::new();
        if self.intercept {
            out.push(0);
        }
        for k in 1..=self.order.min(length) {
            push_combinations(length, k, &mut out);
        }
        out
    }

    pub fn dim(&self, length: usize) -> usize {
        let mut d = usize::from(self.intercept);
        for k in 1..=self.order.min(length) {
            d += binomial(length, k);
        }
        d
    }
}

fn push_combinations(length: usize, k: usize, out: &mut Vec<u32>) {
    fn rec(start: usize, length: usize, left: usize, mask: u32, out: &mut Vec<u32>) {
        if left == 0 {
            out.push(mask);
            return;
        }
        for pos in start..=length - left {
            // position `pos` lives in bit `length - 1 - pos`
            rec(
                pos + 1,
                length,
                left - 1,
                mask | 1 << (length - 1 - pos),
                out,
            );
        }
    }
    rec(0, length, k, 0, out);
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Value of the interaction feature `subset` for sequence `index`.
#[inline]
fn interaction(index: usize, subset: u32) -> f64 {
    let minus_ones = (subset & !(index as u32)).count_ones();
    if minus_ones % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Signed-bit vector of sequence `index`.
pub fn signed_bits(index: usize, length: usize) -> Vec<f64> {
    (0..length)
        .map(|j| {
            if index >> (length - 1 - j) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

pub fn sequence_string(index: usize, length: usize) -> String {
    (0..length)
        .map(|j| {
            if index >> (length - 1 - j) & 1 == 1 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

fn parse_sequence(s: &str) -> Option<usize> {
    let mut idx = 0usize;
    for c in s.chars() {
        idx = idx << 1
            | match c {
                '0' => 0,
                '1' => 1,
                _ => return None,
            };
    }
    Some(idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    length: usize,
    fitness: Vec<f64>,
    noise_sd: Vec<f64>,
    feature_map: FeatureMap,
    dim: usize,
    features: Vec<f64>,
}

impl Landscape {
    pub fn new(
        length: usize,
        fitness: Vec<f64>,
        noise_sd: Vec<f64>,
        feature_map: FeatureMap,
    ) -> Result<Self> {
        check_length(length)?;
        let size = 1usize << length;
        if fitness.len() != size || noise_sd.len() != size {
            return Err(FcsError::input(format!(
                "landscape of length {length} needs {size} rows, got {} fitness and {} noise values",
                fitness.len(),
                noise_sd.len()
            )));
        }
        if fitness.iter().any(|f| !f.is_finite()) {
            return Err(FcsError::input("fitness values must be finite"));
        }
        if noise_sd.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(FcsError::input(
                "noise sd values must be finite and nonnegative",
            ));
        }
        if feature_map.order == 0 {
            return Err(FcsError::input("feature order must be at least 1"));
        }
        let subsets = feature_map.subsets(length);
        let dim = subsets.len();
        let mut features = Vec::with_capacity(size * dim);
        for idx in 0..size {
            features.extend(subsets.iter().map(|&s| interaction(idx, s)));
        }
        Ok(Self {
            length,
            fitness,
            noise_sd,
            feature_map,
            dim,
            features,
        })
    }

    /// Same landscape under a different featurization.
    pub fn with_feature_map(&self, feature_map: FeatureMap) -> Result<Self> {
        Self::new(
            self.length,
            self.fitness.clone(),
            self.noise_sd.clone(),
            feature_map,
        )
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Number of sequences, `2^L`.
    pub fn size(&self) -> usize {
        self.fitness.len()
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    pub fn noise_sd(&self) -> &[f64] {
        &self.noise_sd
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self, index: usize) -> &[f64] {
        &self.features[index * self.dim..(index + 1) * self.dim]
    }

    /// Row-major `size × feature_dim` feature matrix.
    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    pub fn fitness_range(&self) -> (f64, f64) {
        let lo = self.fitness.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .fitness
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Predictions `coefficientsᵀ x` for every sequence.
    pub fn predict_all(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() != self.dim {
            return Err(FcsError::input(format!(
                "model has {} coefficients but the landscape has {} features",
                coefficients.len(),
                self.dim
            )));
        }
        Ok(self
            .features
            .chunks_exact(self.dim)
            .map(|row| crate::regression::dot(row, coefficients))
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{LANDSCAPE_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seq", "fitness", "noise_sd"])?;
        for idx in 0..self.size() {
            w.write_record([
                sequence_string(idx, self.length),
                self.fitness[idx].to_string(),
                self.noise_sd[idx].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_length(length: usize) -> Result<()> {
    if length > MAX_LENGTH {
        return Err(FcsError::Unsupported(format!(
            "sequence length {length} exceeds the exact-enumeration limit of {MAX_LENGTH}"
        )));
    }
    if length < 2 {
        return Err(FcsError::input(format!(
            "sequence length must be at least 2, got {length}"
        )));
    }
    Ok(())
}

/// A synthetic landscape together with the coefficients that generated it.
#[derive(Debug, Clone)]
pub struct SyntheticLandscape {
    pub landscape: Landscape,
    /// One coefficient per interaction feature of order `1..=max_order`, in
    /// [`FeatureMap::subsets`] order.
    pub coefficients: Vec<f64>,
}

/// Fitness is a random linear combination of interaction features up to
/// `max_order`; coefficients of order `k` are drawn from `N(0, coeff_sd[k-1]²)`.
/// The returned landscape is featurized at `max_order` without intercept.
pub fn generate_synthetic_landscape(
    length: usize,
    max_order: usize,
    coeff_sd_per_order: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<SyntheticLandscape> {
    check_length(length)?;
    if max_order == 0 || max_order > length {
        return Err(FcsError::input(format!(
            "max order must lie in 1..={length}, got {max_order}"
        )));
    }
    if coeff_sd_per_order.len() != max_order {
        return Err(FcsError::input(format!(
            "expected {max_order} per-order coefficient sds, got {}",
            coeff_sd_per_order.len()
        )));
    }
    if coeff_sd_per_order
        .iter()
        .any(|s| !s.is_finite() || *s < 0.0)
        || !(noise_sd >= 0.0)
    {
        return Err(FcsError::input(
            "standard deviations must be finite and nonnegative",
        ));
    }
    let map = FeatureMap::new(max_order, false);
    let subsets = map.subsets(length);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefficients: Vec<f64> = subsets
        .iter()
        .map(|s| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * coeff_sd_per_order[s.count_ones() as usize - 1]
        })
        .collect();
    let size = 1usize << length;
    let fitness: Vec<f64> = (0..size)
        .map(|idx| {
            subsets
                .iter()
                .zip(&coefficients)
                .map(|(&s, c)| c * interaction(idx, s))
                .sum()
        })
        .collect();
    let landscape = Landscape::new(length, fitness, vec![noise_sd; size], map)?;
    Ok(SyntheticLandscape {
        landscape,
        coefficients,
    })
}

/// Reads a landscape CSV (`seq,fitness[,noise_sd]`). When the noise column is
/// absent or empty, per-sequence noise is estimated with
/// [`estimate_noise_sd`] at order `min(7, L)`.
pub fn load_landscape(path: impl AsRef<Path>, feature_map: FeatureMap) -> Result<Landscape> {
    let file = std::fs::File::open(path)?;
    read_landscape(file, feature_map)
}

pub fn read_landscape<R: std::io::Read>(input: R, feature_map: FeatureMap) -> Result<Landscape> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let seq_col = col("seq").ok_or(FcsError::Format {
        row: 1,
        message: "missing `seq` column".into(),
    })?;
    let fit_col = col("fitness").ok_or(FcsError::Format {
        row: 1,
        message: "missing `fitness` column".into(),
    })?;
    let sd_col = col("noise_sd");

    let mut length = None;
    let mut fitness: Vec<Option<f64>> = Vec::new();
    let mut noise: Vec<Option<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record?;
        let fmt = |message: String| FcsError::Format { row, message };
        let seq = record.get(seq_col).unwrap_or("");
        let len = *length.get_or_insert(seq.len());
        if seq.len() != len {
            return Err(fmt(format!(
                "sequence `{seq}` has length {}, expected {len}",
                seq.len()
            )));
        }
        if i == 0 {
            check_length(len).map_err(|e| match e {
                FcsError::Unsupported(m) => FcsError::Unsupported(m),
                other => fmt(other.to_string()),
            })?;
            fitness = vec![None; 1 << len];
            noise = vec![None; 1 << len];
        }
        let idx = parse_sequence(seq).ok_or_else(|| {
            fmt(format!(
                "sequence `{seq}` contains characters other than 0/1"
            ))
        })?;
        if fitness[idx].is_some() {
            return Err(fmt(format!("duplicate sequence `{seq}`")));
        }
        let value: f64 = record
            .get(fit_col)
            .unwrap_or("")
            .parse()
            .map_err(|_| fmt("fitness is not a number".into()))?;
        if !value.is_finite() {
            return Err(fmt("fitness is not finite".into()));
        }
        fitness[idx] = Some(value);
        if let Some(c) = sd_col {
            let raw = record.get(c).unwrap_or("");
            if !raw.is_empty() {
                let sd: f64 = raw
                    .parse()
                    .map_err(|_| fmt("noise_sd is not a number".into()))?;
                if !sd.is_finite() || sd < 0.0 {
                    return Err(fmt("noise_sd must be finite and nonnegative".into()));
                }
                noise[idx] = Some(sd);
            }
        }
    }
    let Some(length) = length else {
        return Err(FcsError::Format {
            row: 2,
            message: "landscape file has no rows".into(),
        });
    };
    let rows = fitness.iter().filter(|f| f.is_some()).count();
    if let Some(missing) = fitness.iter().position(Option::is_none) {
        return Err(FcsError::Format {
            row: rows + 2,
            message: format!(
                "landscape has {rows} of {} sequences; missing sequence `{}`",
                1usize << length,
                sequence_string(missing, length)
            ),
        });
    }
    let fitness: Vec<f64> = fitness.into_iter().map(Option::unwrap).collect();
    if noise.iter().all(Option::is_some) {
        let noise = noise.into_iter().map(Option::unwrap).collect();
        Landscape::new(length, fitness, noise, feature_map)
    } else {
        let size = fitness.len();
        let bare = Landscape::new(length, fitness, vec![0.0; size], feature_map)?;
        estimate_noise_sd(&bare, 7.min(length))
    }
}

/// In-place fast Walsh–Hadamard transform (unnormalized).
fn walsh_hadamard(values: &mut [f64]) {
    let n = values.len();
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for j in block..block + h {
                let (a, b) = (values[j], values[j + h]);
                values[j] = a + b;
                values[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Least-squares fit of fitness on all interactions up to `order` (constant
/// term included); the noise sd of each sequence becomes its absolute
/// residual.
///
/// On a complete landscape the interaction columns are orthogonal, so the fit
/// is the Walsh–Hadamard spectrum truncated to subsets of size `<= order`.
pub fn estimate_noise_sd(landscape: &Landscape, order: usize) -> Result<Landscape> {
    let length = landscape.length();
    if order > length {
        return Err(FcsError::input(format!(
            "noise-fit order {order} exceeds sequence length {length}"
        )));
    }
    let size = landscape.size();
    let mut spectrum = landscape.fitness().to_vec();
    walsh_hadamard(&mut spectrum);
    for (subset, coef) in spectrum.iter_mut().enumerate() {
        if subset.count_ones() as usize > order {
            *coef = 0.0;
        }
    }
    walsh_hadamard(&mut spectrum);
    let noise: Vec<f64> = landscape
        .fitness()
        .iter()
        .zip(&spectrum)
        .map(|(f, fit)| (f - fit / size as f64).abs())
        .collect();
    Landscape::new(
        length,
        landscape.fitness().to_vec(),
        noise,
        landscape.feature_map(),
    )
}
