//! Online extraction with the dual-linear-predictor structure.
//!
//! Two prediction-error filters run on the extractor output: the primary
//! with taps `b` (lags 1..P) and the secondary with taps `d` (lags
//! 1..P_d, default the one-step-ahead predictor `d = [1]`). The cost
//!
//! `J(w) = (q_c E{y²} - E{e²}) / (a_c E{y²} - E{f²})`
//!
//! is a ratio of noise-free correlation functionals: the common power
//! terms cancel the white-noise contribution of both mean square
//! prediction errors. Minimising it extracts the source with the
//! smallest normalised autocorrelation value.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::delay::{ScalarDelayLine, VectorDelayLine};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::SignalMatrix;
use crate::stats::{estimate_lag_correlation, PredictorCoeffs};

/// Samples seen before weight updates begin.
pub const DEFAULT_WARMUP: usize = 100;

const DENOMINATOR_GUARD: f64 = 1e-9;

/// Forgetting factors for the three recursive power estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgettingFactors {
    pub beta_e: f64,
    pub beta_y: f64,
    pub beta_f: f64,
}

impl ForgettingFactors {
    /// The same factor for all three estimates.
    pub fn uniform(beta: f64) -> Self {
        Self { beta_e: beta, beta_y: beta, beta_f: beta }
    }

    fn validate(&self) -> Result<()> {
        for (name, beta) in [
            ("beta_e", self.beta_e),
            ("beta_y", self.beta_y),
            ("beta_f", self.beta_f),
        ] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!(
                    "forgetting factor {name} must satisfy 0 <= beta < 1, got {beta}"
                )));
            }
        }
        Ok(())
    }
}

/// Output of one dual-predictor step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualStepOutput {
    /// Extractor output `y[n] = wᵀ x[n]`.
    pub y: f64,
    /// Primary prediction error `e[n] = y[n] - Σ b_p y[n-p]`.
    pub e: f64,
    /// Secondary prediction error `f[n] = y[n] - Σ d_p y[n-p]`.
    pub f: f64,
}

/// State of the dual-linear-predictor extractor.
#[derive(Debug, Clone)]
pub struct DualLpExtractor {
    w: Array1<f64>,
    coeffs: PredictorCoeffs,
    q_c: f64,
    a_c: f64,
    sigma_e: f64,
    sigma_y: f64,
    sigma_f: f64,
    betas: ForgettingFactors,
    mu: f64,
    renormalize: bool,
    warmup: usize,
    steps: usize,
    skipped_updates: usize,
    x_delay: VectorDelayLine,
    y_delay: ScalarDelayLine,
    last_raw_step: Array1<f64>,
}

impl DualLpExtractor {
    pub fn new(
        channels: usize,
        coeffs: PredictorCoeffs,
        mu: f64,
        betas: ForgettingFactors,
        seed: u64,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("need at least one channel".into()));
        }
        betas.validate()?;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {mu}")));
        }
        let depth = coeffs.b.len().max(coeffs.d.len()) + 1;
        let q_c = coeffs.q_c();
        let a_c = coeffs.a_c();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Array1::zeros(channels);
        loop {
            for v in w.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let norm = linalg::vector_norm(&w);
            if norm > 1e-6 {
                w.mapv_inplace(|v| v / norm);
                break;
            }
        }
        Ok(Self {
            w,
            q_c,
            a_c,
            sigma_e: 1.0,
            sigma_y: 1.0,
            sigma_f: 1.0,
            betas,
            mu,
            renormalize: false,
            warmup: DEFAULT_WARMUP.max(depth),
            steps: 0,
            skipped_updates: 0,
            x_delay: VectorDelayLine::new(channels, depth),
            y_delay: ScalarDelayLine::new(depth),
            last_raw_step: Array1::zeros(channels),
            coeffs,
        })
    }

    /// Enables per-step unit-norm renormalization of `w`. The update rule
    /// itself has none; this is an optional stabilisation, off by default.
    pub fn with_renormalization(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    pub fn with_warmup(mut self, samples: usize) -> Self {
        self.warmup = samples.max(self.coeffs.b.len().max(self.coeffs.d.len()) + 1);
        self
    }

    /// Processes one mixture sample.
    pub fn step(&mut self, x_n: &[f64]) -> Result<DualStepOutput> {
        if x_n.len() != self.w.len() {
            return Err(Error::Config(format!(
                "expected {} channels, got {}",
                self.w.len(),
                x_n.len()
            )));
        }
        self.x_delay.push(x_n);
        let y = self.w.iter().zip(x_n).map(|(w, x)| w * x).sum::<f64>();

        let b = &self.coeffs.b;
        let d = &self.coeffs.d;
        let mut e = y;
        for (p, bp) in b.iter().enumerate() {
            e -= bp * self.y_delay.get(p);
        }
        let mut f = y;
        for (p, dp) in d.iter().enumerate() {
            f -= dp * self.y_delay.get(p);
        }

        self.sigma_e = self.betas.beta_e * self.sigma_e + (1.0 - self.betas.beta_e) * e * e;
        self.sigma_y = self.betas.beta_y * self.sigma_y + (1.0 - self.betas.beta_y) * y * y;
        self.sigma_f = self.betas.beta_f * self.sigma_f + (1.0 - self.betas.beta_f) * f * f;

        self.last_raw_step.fill(0.0);
        if self.steps >= self.warmup {
            let den = self.a_c * self.sigma_y - self.sigma_f;
            if den.abs() < DENOMINATOR_GUARD {
                self.skipped_updates += 1;
            } else {
                let numerator_power = self.q_c * self.sigma_y - self.sigma_e;
                let scale = 2.0 * self.mu / (den * den);
                for (m, xm) in x_n.iter().enumerate() {
                    let mut x_hat = *xm;
                    for (p, bp) in b.iter().enumerate() {
                        x_hat -= bp * self.x_delay.get(p + 1)[m];
                    }
                    let mut x_tilde = *xm;
                    for (p, dp) in d.iter().enumerate() {
                        x_tilde -= dp * self.x_delay.get(p + 1)[m];
                    }
                    let descent = (self.q_c * y * xm - e * x_hat) * den
                        - numerator_power * (self.a_c * y * xm - f * x_tilde);
                    self.last_raw_step[m] = -scale * descent;
                }
                self.w += &self.last_raw_step;
                if self.renormalize {
                    let norm = linalg::vector_norm(&self.w);
                    self.w.mapv_inplace(|v| v / norm);
                }
            }
        }

        self.y_delay.push(y);
        self.steps += 1;
        Ok(DualStepOutput { y, e, f })
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn coeffs(&self) -> &PredictorCoeffs {
        &self.coeffs
    }

    pub fn q_c(&self) -> f64 {
        self.q_c
    }

    pub fn a_c(&self) -> f64 {
        self.a_c
    }

    pub fn sigma_e(&self) -> f64 {
        self.sigma_e
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn skipped_updates(&self) -> usize {
        self.skipped_updates
    }

    pub fn last_raw_step(&self) -> &Array1<f64> {
        &self.last_raw_step
    }
}

/// The dual-predictor cost on frozen sample statistics, as the matrix
/// pair `N̂ = q_c R̂[0] - M_b` and `D̂ = a_c R̂[0] - M_d` where `M_c` is the
/// full quadratic expansion `Σ_{p,q} c_p c_q R̂[q-p]` of a prediction
/// error's power.
#[derive(Debug, Clone)]
pub struct DualCost {
    numerator: Array2<f64>,
    denominator: Array2<f64>,
}

impl DualCost {
    pub fn estimate(x: &SignalMatrix, coeffs: &PredictorCoeffs) -> Result<Self> {
        let r0 = estimate_lag_correlation(x, 0, false)?.matrix().clone();
        let mb = prediction_error_matrix(x, &coeffs.b)?;
        let md = prediction_error_matrix(x, &coeffs.d)?;
        let mut numerator = r0.clone();
        numerator.mapv_inplace(|v| v * coeffs.q_c());
        numerator -= &mb;
        let mut denominator = r0;
        denominator.mapv_inplace(|v| v * coeffs.a_c());
        denominator -= &md;
        Ok(Self { numerator, denominator })
    }

    pub fn numerator(&self) -> &Array2<f64> {
        &self.numerator
    }

    pub fn denominator(&self) -> &Array2<f64> {
        &self.denominator
    }

    pub fn value(&self, w: &Array1<f64>) -> Result<f64> {
        let den = w.dot(&self.denominator.dot(w));
        if den <= 0.0 {
            return Err(Error::PositivityViolation(format!(
                "dual cost denominator {den:.3e} is not positive; the sources must \
                 correlate positively at the secondary predictor lags"
            )));
        }
        Ok(w.dot(&self.numerator.dot(w)) / den)
    }

    pub fn gradient(&self, w: &Array1<f64>) -> Result<Array1<f64>> {
        let num = w.dot(&self.numerator.dot(w));
        let den = w.dot(&self.denominator.dot(w));
        if den <= 0.0 {
            return Err(Error::PositivityViolation(format!(
                "dual cost denominator {den:.3e} is not positive"
            )));
        }
        let nw = self.numerator.dot(w);
        let dw = self.denominator.dot(w);
        Ok((nw * den - dw * num).mapv(|v| 2.0 * v / (den * den)))
    }
}

/// Batch evaluation of the dual-predictor cost over a full signal.
pub fn dual_cost(x: &SignalMatrix, coeffs: &PredictorCoeffs, w: &Array1<f64>) -> Result<f64> {
    DualCost::estimate(x, coeffs)?.value(w)
}

/// Power matrix of a prediction error with taps `[1, -c_1, ..., -c_P]`:
/// `E{e²} = wᵀ M w` with `M = Σ_{p,q} c'_p c'_q R̂_xx[q-p]` and
/// `R̂[-Δ] = R̂[Δ]ᵀ`.
pub fn prediction_error_matrix(x: &SignalMatrix, taps: &[f64]) -> Result<Array2<f64>> {
    let dim = x.channel_count();
    let order = taps.len();
    let mut lagged = Vec::with_capacity(order + 1);
    for lag in 0..=order {
        lagged.push(estimate_lag_correlation(x, lag, false)?.matrix().clone());
    }
    let mut signed = Vec::with_capacity(order + 1);
    signed.push(1.0);
    signed.extend(taps.iter().map(|c| -c));
    let mut m = Array2::zeros((dim, dim));
    for (p, cp) in signed.iter().enumerate() {
        for (q, cq) in signed.iter().enumerate() {
            let weight = cp * cq;
            if q >= p {
                m.scaled_add(weight, &lagged[q - p]);
            } else {
                m.scaled_add(weight, &lagged[p - q].t());
            }
        }
    }
    Ok(m)
}
