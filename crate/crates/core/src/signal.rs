//! Source generation, mixing and multichannel signal buffers.
//!
//! Sources are produced by driving per-source linear filters with seeded
//! white Gaussian noise; mixtures are instantaneous (`x[n] = A s[n] + v[n]`)
//! with optional spatially and temporally white additive noise.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::derive_seed;

/// Multichannel time series stored channels × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    data: Array2<f64>,
}

impl SignalMatrix {
    /// Wraps a channels × samples matrix, validating shape and finiteness.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (c, n) = data.dim();
        if c == 0 || n == 0 {
            return Err(Error::Config(format!(
                "signal matrix must be non-empty, got {c} channels x {n} samples"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("signal matrix contains non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn channel_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn sample_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn channel(&self, index: usize) -> ArrayView1<'_, f64> {
        self.data.row(index)
    }

    /// The sample vector `x[n]` at time `n` as an owned column.
    pub fn sample(&self, n: usize) -> Array1<f64> {
        self.data.column(n).to_owned()
    }

    /// Serializes to CSV: a `# channels=C samples=N` header line then one
    /// comma-separated row per channel, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# channels={} samples={}\n",
            self.channel_count(),
            self.sample_count()
        ));
        for row in self.data.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV format written by [`SignalMatrix::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty signal CSV".into()))?;
        let (channels, samples) = parse_signal_header(header)?;
        let mut data = Array2::zeros((channels, samples));
        let mut row = 0;
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if row >= channels {
                return Err(Error::Parse(format!(
                    "signal CSV has more than {channels} data rows"
                )));
            }
            let values: Vec<&str> = line.split(',').collect();
            if values.len() != samples {
                return Err(Error::Parse(format!(
                    "row {row} has {} values, header says samples={samples}",
                    values.len()
                )));
            }
            for (col, v) in values.iter().enumerate() {
                data[[row, col]] = v
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {row} col {col}: {e}")))?;
            }
            row += 1;
        }
        if row != channels {
            return Err(Error::Parse(format!(
                "signal CSV has {row} data rows, header says channels={channels}"
            )));
        }
        Self::new(data)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }
}

fn parse_signal_header(header: &str) -> Result<(usize, usize)> {
    let body = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse(format!("expected '# channels=C samples=N', got {header:?}")))?;
    let mut channels = None;
    let mut samples = None;
    for token in body.split_whitespace() {
        if let Some(v) = token.strip_prefix("channels=") {
            channels = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
        } else if let Some(v) = token.strip_prefix("samples=") {
            samples = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
        }
    }
    match (channels, samples) {
        (Some(c), Some(n)) => Ok((c, n)),
        _ => Err(Error::Parse(format!(
            "expected '# channels=C samples=N', got {header:?}"
        ))),
    }
}

/// How a source filter's coefficients are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Recursive filter `s[n] = x[n] - a1 s[n-1] - ... - ap s[n-p]` with
    /// monic denominator `[1, a1, ..., ap]`.
    AllPole,
    /// FIR filter `s[n] = b0 x[n] + ... + bq x[n-q]`.
    AllZero,
}

/// One source's shaping filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFilter {
    pub kind: FilterKind,
    pub coefficients: Vec<f64>,
}

impl SourceFilter {
    pub fn all_pole(coefficients: Vec<f64>) -> Self {
        Self { kind: FilterKind::AllPole, coefficients }
    }

    pub fn all_zero(coefficients: Vec<f64>) -> Self {
        Self { kind: FilterKind::AllZero, coefficients }
    }

    /// Transient length of the filter (number of delayed taps).
    pub fn order(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    fn validate(&self) -> Result<()> {
        if self.coefficients.iter().all(|c| *c == 0.0) {
            return Err(Error::Config("filter has no nonzero coefficient".into()));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("filter coefficients must be finite".into()));
        }
        if self.kind == FilterKind::AllPole {
            if self.coefficients[0] != 1.0 {
                return Err(Error::Config(
                    "all-pole filter must have leading coefficient 1".into(),
                ));
            }
            let max_pole = max_root_magnitude(&self.coefficients);
            if max_pole >= 1.0 {
                return Err(Error::Config(format!(
                    "unstable all-pole filter: pole magnitude {max_pole:.6} >= 1"
                )));
            }
        }
        Ok(())
    }

    fn apply(&self, driver: &[f64]) -> Vec<f64> {
        let n = driver.len();
        let mut out = vec![0.0; n];
        match self.kind {
            FilterKind::AllPole => {
                let a = &self.coefficients;
                for i in 0..n {
                    let mut acc = driver[i];
                    for k in 1..a.len() {
                        if i >= k {
                            acc -= a[k] * out[i - k];
                        }
                    }
                    out[i] = acc;
                }
            }
            FilterKind::AllZero => {
                let b = &self.coefficients;
                for i in 0..n {
                    let mut acc = 0.0;
                    for (k, bk) in b.iter().enumerate() {
                        if i >= k {
                            acc += bk * driver[i - k];
                        }
                    }
                    out[i] = acc;
                }
            }
        }
        out
    }
}

/// Specification for a deterministically generated source ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub filters: Vec<SourceFilter>,
    pub seed: u64,
    pub length: usize,
    #[serde(default = "default_true")]
    pub normalize_power: bool,
}

fn default_true() -> bool {
    true
}

impl SourceSpec {
    pub fn source_count(&self) -> usize {
        self.filters.len()
    }

    /// Same ensemble under a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Leading samples dropped per source to reach stationarity: ten times the
/// filter order.
fn warmup_samples(filter: &SourceFilter) -> usize {
    10 * filter.order()
}

/// Generates the source ensemble described by `spec`, one row per source.
///
/// Each source has its own white Gaussian driver derived from
/// `(spec.seed, source index)`, so the ensemble is reproducible and sources
/// are mutually independent. Filter transients are discarded.
pub fn generate_sources(spec: &SourceSpec) -> Result<SignalMatrix> {
    if spec.filters.is_empty() {
        return Err(Error::Config("source spec has no filters".into()));
    }
    let max_order = spec.filters.iter().map(SourceFilter::order).max().unwrap();
    if spec.length < (10 * max_order).max(1) {
        return Err(Error::Config(format!(
            "length {} too short for filter order {max_order} (need at least {})",
            spec.length,
            (10 * max_order).max(1)
        )));
    }
    let mut data = Array2::zeros((spec.filters.len(), spec.length));
    for (l, filter) in spec.filters.iter().enumerate() {
        filter.validate()?;
        let warmup = warmup_samples(filter);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, l as u64));
        let driver: Vec<f64> = (0..spec.length + warmup)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut samples = filter.apply(&driver);
        samples.drain(..warmup);
        if spec.normalize_power {
            let power = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
            if power <= 0.0 {
                return Err(Error::Degenerate(format!("source {l} has zero power")));
            }
            let scale = 1.0 / power.sqrt();
            for v in &mut samples {
                *v *= scale;
            }
        }
        for (i, v) in samples.iter().enumerate() {
            data[[l, i]] = *v;
        }
    }
    SignalMatrix::new(data)
}

/// Instantaneous mixing model with additive white Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    mixing: Array2<f64>,
    noise_variance: f64,
    row_normalized: bool,
}

impl MixtureModel {
    /// Builds the model from an explicit mixing matrix.
    pub fn new(mixing: Array2<f64>, noise_variance: f64) -> Result<Self> {
        Self::build(mixing, noise_variance, false)
    }

    /// Builds the model after scaling every row of `mixing` to unit norm.
    pub fn with_normalized_rows(mixing: Array2<f64>, noise_variance: f64) -> Result<Self> {
        let normalized = row_normalize(&mixing)?;
        Self::build(normalized, noise_variance, true)
    }

    /// Draws a random mixing matrix with unit-norm rows, rejecting draws
    /// whose smallest singular value falls below 0.3 so that downstream
    /// correlation pencils stay well conditioned.
    pub fn random(mixtures: usize, sources: usize, noise_variance: f64, seed: u64) -> Result<Self> {
        if mixtures < sources || sources < 2 {
            return Err(Error::Config(format!(
                "need mixtures >= sources >= 2, got {mixtures}x{sources}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let mut a = Array2::zeros((mixtures, sources));
            for v in a.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let a = row_normalize(&a)?;
            if smallest_singular_value(&a)? >= 0.3 {
                return Self::build(a, noise_variance, true);
            }
        }
        Err(Error::Config(
            "could not draw a well-conditioned mixing matrix in 1000 attempts".into(),
        ))
    }

    fn build(mixing: Array2<f64>, noise_variance: f64, row_normalized: bool) -> Result<Self> {
        let (m, l) = mixing.dim();
        if l < 2 || m < l {
            return Err(Error::Config(format!(
                "mixing matrix must be M x L with M >= L >= 2, got {m}x{l}"
            )));
        }
        if mixing.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("mixing matrix contains non-finite entries".into()));
        }
        if noise_variance < 0.0 || !noise_variance.is_finite() {
            return Err(Error::Config(format!(
                "noise variance must be finite and >= 0, got {noise_variance}"
            )));
        }
        let smin = smallest_singular_value(&mixing)?;
        let smax = largest_singular_value(&mixing)?;
        if smin <= 1e-12 * smax.max(1.0) {
            return Err(Error::Config(format!(
                "mixing matrix is column rank deficient (sigma_min = {smin:.3e})"
            )));
        }
        if row_normalized {
            for row in mixing.rows() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                debug_assert!((norm - 1.0).abs() <= 1e-12);
            }
        }
        Ok(Self { mixing, noise_variance, row_normalized })
    }

    pub fn mixing(&self) -> &Array2<f64> {
        &self.mixing
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn row_normalized(&self) -> bool {
        self.row_normalized
    }

    pub fn mixture_count(&self) -> usize {
        self.mixing.nrows()
    }

    pub fn source_count(&self) -> usize {
        self.mixing.ncols()
    }
}

/// Mixes sources through the model: `x[n] = A s[n] + v[n]` with i.i.d.
/// Gaussian noise of the model's variance, drawn from `noise_seed`.
pub fn mix(model: &MixtureModel, sources: &SignalMatrix, noise_seed: u64) -> Result<SignalMatrix> {
    if sources.channel_count() != model.source_count() {
        return Err(Error::Config(format!(
            "mixing matrix expects {} sources, signal has {} channels",
            model.source_count(),
            sources.channel_count()
        )));
    }
    let mut x = model.mixing.dot(sources.data());
    if model.noise_variance > 0.0 {
        let sigma = model.noise_variance.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in x.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    SignalMatrix::new(x)
}

/// Scales every row of `a` to unit Euclidean norm.
pub fn row_normalize(a: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = a.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Config(format!("row {i} of mixing matrix is zero")));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

fn smallest_singular_value(a: &Array2<f64>) -> Result<f64> {
    let gram = a.t().dot(a);
    let (vals, _) = linalg::jacobi_eigh(&gram)?;
    Ok(vals[vals.len() - 1].max(0.0).sqrt())
}

fn largest_singular_value(a: &Array2<f64>) -> Result<f64> {
    let gram = a.t().dot(a);
    let (vals, _) = linalg::jacobi_eigh(&gram)?;
    Ok(vals[0].max(0.0).sqrt())
}

/// Largest modulus among the roots of the monic polynomial
/// `z^p + c1 z^(p-1) + ... + cp` given as `[1, c1, ..., cp]`,
/// found by Durand-Kerner iteration.
fn max_root_magnitude(monic: &[f64]) -> f64 {
    let degree = monic.len() - 1;
    if degree == 0 {
        return 0.0;
    }
    let coeffs: Vec<Complex64> = monic.iter().map(|c| Complex64::new(*c, 0.0)).collect();
    let eval = |z: Complex64| {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &coeffs {
            acc = acc * z + c;
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..200 {
        let mut shift = 0.0f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            shift = shift.max(delta.norm());
        }
        if shift < 1e-13 {
            break;
        }
    }
    roots.iter().map(|r| r.norm()).fold(0.0, f64::max)
}
