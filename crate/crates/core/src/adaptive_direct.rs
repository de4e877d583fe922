//! Online extraction by stochastic gradient ascent on the weighted-lag
//! correlation ratio
//! `J(w) = E{y[n] e[n]} / E{y[n] y[n-1]}` with `e[n] = Σ_k b_k y[n-1-k]`,
//! i.e. the numerator correlates the output with a weighted sum of its
//! delayed copies at lags 2..P+1 while the denominator is the lag-1
//! self-correlation.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::delay::{ScalarDelayLine, VectorDelayLine};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::SignalMatrix;
use crate::stats::estimate_lag_correlation;

/// Samples seen before weight updates begin; early denominator estimates
/// are too noisy to divide by.
pub const DEFAULT_WARMUP: usize = 100;

/// Guard below which an update is skipped instead of dividing by a
/// vanishing correlation estimate.
const SIGMA_GUARD: f64 = 1e-9;

/// State of the direct online extractor.
#[derive(Debug, Clone)]
pub struct DirectExtractor {
    w: Array1<f64>,
    b: Vec<f64>,
    mu: f64,
    beta: f64,
    sigma_y: f64,
    warmup: usize,
    steps: usize,
    skipped_updates: usize,
    x_delay: VectorDelayLine,
    y_delay: ScalarDelayLine,
    last_raw_step: Array1<f64>,
}

impl DirectExtractor {
    /// Creates an extractor for `channels`-dimensional mixtures with fixed
    /// numerator weights `b` (over lags 2..P+1), step size `mu` and
    /// forgetting factor `beta`. The initial demixing vector is a random
    /// unit vector drawn from `seed`.
    pub fn new(channels: usize, b: Vec<f64>, mu: f64, beta: f64, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("need at least one channel".into()));
        }
        if b.is_empty() {
            return Err(Error::Config("numerator weights must be non-empty (P >= 1)".into()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("numerator weights must be finite".into()));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!(
                "forgetting factor must satisfy 0 <= beta < 1, got {beta}"
            )));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {mu}")));
        }
        let depth = b.len() + 2;
        let w = random_unit_vector(channels, seed);
        Ok(Self {
            w,
            mu,
            beta,
            sigma_y: 1.0,
            warmup: DEFAULT_WARMUP.max(depth),
            steps: 0,
            skipped_updates: 0,
            x_delay: VectorDelayLine::new(channels, depth),
            y_delay: ScalarDelayLine::new(depth),
            last_raw_step: Array1::zeros(channels),
            b,
        })
    }

    /// Overrides the warm-up length (still at least long enough to fill
    /// the delay line).
    pub fn with_warmup(mut self, samples: usize) -> Self {
        self.warmup = samples.max(self.b.len() + 2);
        self
    }

    /// Processes one mixture sample, returning the extractor output
    /// `y[n] = wᵀ x[n]`.
    pub fn step(&mut self, x_n: &[f64]) -> Result<f64> {
        if x_n.len() != self.w.len() {
            return Err(Error::Config(format!(
                "expected {} channels, got {}",
                self.w.len(),
                x_n.len()
            )));
        }
        self.x_delay.push(x_n);
        let y = self.w.iter().zip(x_n).map(|(w, x)| w * x).sum::<f64>();
        self.y_delay.push(y);
        let y1 = self.y_delay.get(1);

        if self.steps >= 1 {
            self.sigma_y = self.beta * self.sigma_y + (1.0 - self.beta) * y * y1;
        }

        self.last_raw_step.fill(0.0);
        if self.steps >= self.warmup {
            if self.sigma_y.abs() < SIGMA_GUARD {
                self.skipped_updates += 1;
            } else {
                let p = self.b.len();
                let mut e0 = 0.0;
                for k in 0..p {
                    e0 += self.b[k] * self.y_delay.get(k + 2);
                }
                let x1 = self.x_delay.get(1);
                let factor = self.mu / (self.sigma_y * self.sigma_y);
                let yy1 = y * y1;
                let ye = y * e0;
                for m in 0..self.w.len() {
                    let mut x_hat = 0.0;
                    for k in 0..p {
                        x_hat += self.b[k] * self.x_delay.get(k + 2)[m];
                    }
                    let ascent =
                        (y * x_hat + x_n[m] * e0) * yy1 - ye * (y * x1[m] + x_n[m] * y1);
                    self.last_raw_step[m] = factor * ascent;
                }
                self.w += &self.last_raw_step;
                let norm = linalg::vector_norm(&self.w);
                self.w.mapv_inplace(|v| v / norm);
            }
        }
        self.steps += 1;
        Ok(y)
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn numerator_weights(&self) -> &[f64] {
        &self.b
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Updates skipped because the denominator estimate vanished.
    pub fn skipped_updates(&self) -> usize {
        self.skipped_updates
    }

    /// The last weight increment before renormalization (zeros when the
    /// step performed no update).
    pub fn last_raw_step(&self) -> &Array1<f64> {
        &self.last_raw_step
    }
}

/// The direct cost on frozen sample statistics:
/// `J(w) = wᵀ N̂ w / wᵀ D̂ w` with `N̂ = sym(Σ_k b_k R̂_xx[k+1])` and
/// `D̂ = sym(R̂_xx[1])`.
#[derive(Debug, Clone)]
pub struct DirectCost {
    numerator: Array2<f64>,
    denominator: Array2<f64>,
}

impl DirectCost {
    pub fn estimate(x: &SignalMatrix, b: &[f64]) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::Config("numerator weights must be non-empty".into()));
        }
        let dim = x.channel_count();
        let mut numerator = Array2::zeros((dim, dim));
        for (k, bk) in b.iter().enumerate() {
            let r = estimate_lag_correlation(x, k + 2, true)?;
            numerator.scaled_add(*bk, r.matrix());
        }
        let denominator = estimate_lag_correlation(x, 1, true)?.matrix().clone();
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
        if den == 0.0 {
            return Err(Error::Degenerate("direct cost with zero denominator".into()));
        }
        Ok(w.dot(&self.numerator.dot(w)) / den)
    }

    /// Analytic gradient of the frozen-statistics cost.
    pub fn gradient(&self, w: &Array1<f64>) -> Result<Array1<f64>> {
        let num = w.dot(&self.numerator.dot(w));
        let den = w.dot(&self.denominator.dot(w));
        if den == 0.0 {
            return Err(Error::Degenerate("direct cost with zero denominator".into()));
        }
        let nw = self.numerator.dot(w);
        let dw = self.denominator.dot(w);
        Ok((nw * den - dw * num).mapv(|v| 2.0 * v / (den * den)))
    }
}

fn random_unit_vector(dim: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut w = Array1::zeros(dim);
        for v in w.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let norm = linalg::vector_norm(&w);
        if norm > 1e-6 {
            return w.mapv(|v| v / norm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_sources, SourceFilter, SourceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn state_is_transferable_between_threads() {
        fn assert_send<T: Send>() {}
        assert_send::<DirectExtractor>();
    }

    #[test]
    fn init_gives_unit_weight_vector() {
        let e = DirectExtractor::new(3, vec![1.0, 0.5], 0.001, 0.975, 4).unwrap();
        assert!((linalg::vector_norm(e.weights()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn init_is_deterministic() {
        let a = DirectExtractor::new(3, vec![1.0], 0.001, 0.9, 7).unwrap();
        let b = DirectExtractor::new(3, vec![1.0], 0.001, 0.9, 7).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn hyperparameter_bounds_enforced() {
        assert!(DirectExtractor::new(3, vec![1.0], 0.001, 1.0, 0).is_err());
        assert!(DirectExtractor::new(3, vec![1.0], 0.001, -0.1, 0).is_err());
        assert!(DirectExtractor::new(3, vec![1.0], 0.0, 0.9, 0).is_err());
        assert!(DirectExtractor::new(3, vec![], 0.001, 0.9, 0).is_err());
    }

    #[test]
    fn zero_input_leaves_weights_unchanged() {
        let mut e = DirectExtractor::new(2, vec![1.0], 0.01, 0.9, 1).unwrap().with_warmup(3);
        let w0 = e.weights().clone();
        for _ in 0..50 {
            e.step(&[0.0, 0.0]).unwrap();
        }
        assert_eq!(e.weights(), &w0);
        assert!((linalg::vector_norm(e.weights()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_update_matches_hand_arithmetic() {
        // M = 1, P = 1: replay the recursion by hand and compare the raw
        // weight increment of the first update
        let mu = 0.05;
        let beta = 0.9;
        let b1 = 0.7;
        let mut e = DirectExtractor::new(1, vec![b1], mu, beta, 3).unwrap().with_warmup(3);
        let w0 = e.weights()[0];
        let xs = [0.8, -0.3, 1.1, 0.4];

        // by hand: y[n] = w0 x[n] (no update before step 3)
        let y: Vec<f64> = xs.iter().map(|x| w0 * x).collect();
        let mut sigma = 1.0;
        for n in 1..=3 {
            sigma = beta * sigma + (1.0 - beta) * y[n] * y[n - 1];
        }
        let n = 3;
        let e0 = b1 * y[n - 2];
        let x_hat = b1 * xs[n - 2];
        let expected = mu / (sigma * sigma)
            * ((y[n] * x_hat + xs[n] * e0) * (y[n] * y[n - 1])
                - (y[n] * e0) * (y[n] * xs[n - 1] + xs[n] * y[n - 1]));

        for x in &xs[..3] {
            e.step(&[*x]).unwrap();
            assert_eq!(e.last_raw_step()[0], 0.0);
        }
        e.step(&[xs[3]]).unwrap();
        assert!((e.last_raw_step()[0] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn weights_stay_unit_norm_over_random_steps() {
        let mut e = DirectExtractor::new(3, vec![1.0, 0.5], 0.002, 0.975, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            e.step(&x).unwrap();
            let norm = linalg::vector_norm(e.weights());
            assert!((norm - 1.0).abs() < 1e-10);
        }
        assert_eq!(e.skipped_updates(), 0);
    }

    #[test]
    fn frozen_gradient_matches_finite_differences() {
        let spec = SourceSpec {
            filters: vec![
                SourceFilter::all_pole(vec![1.0, -0.6]),
                SourceFilter::all_pole(vec![1.0, -0.75]),
                SourceFilter::all_pole(vec![1.0, -1.6, 0.64]),
            ],
            seed: 15,
            length: 4000,
            normalize_power: true,
        };
        let s = generate_sources(&spec).unwrap();
        let cost = DirectCost::estimate(&s, &[1.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let w = random_test_point(&mut rng, 3);
            let grad = cost.gradient(&w).unwrap();
            let fd = finite_difference(&cost, &w);
            let scale = linalg::vector_norm(&grad).max(1e-12);
            let diff = linalg::vector_norm(&(&grad - &fd));
            assert!(diff / scale <= 1e-6, "gradient mismatch {}", diff / scale);
        }
    }

    #[test]
    fn cost_is_scale_invariant() {
        let spec = SourceSpec {
            filters: vec![
                SourceFilter::all_pole(vec![1.0, -0.6]),
                SourceFilter::all_pole(vec![1.0, -0.75]),
            ],
            seed: 25,
            length: 4000,
            normalize_power: true,
        };
        let s = generate_sources(&spec).unwrap();
        let cost = DirectCost::estimate(&s, &[1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let w = random_test_point(&mut rng, 2);
            let j = cost.value(&w).unwrap();
            for c in [3.0, -0.2, 1e5] {
                let scaled = w.mapv(|v| c * v);
                let js = cost.value(&scaled).unwrap();
                assert!((js - j).abs() <= 1e-12 * j.abs().max(1e-12));
            }
        }
    }

    fn random_test_point(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
        let mut w = Array1::zeros(dim);
        loop {
            for v in w.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            if linalg::vector_norm(&w) > 0.3 {
                return w;
            }
        }
    }

    fn finite_difference(cost: &DirectCost, w: &Array1<f64>) -> Array1<f64> {
        let h = 1e-6;
        let mut grad = Array1::zeros(w.len());
        for i in 0..w.len() {
            let mut hi = w.clone();
            hi[i] += h;
            let mut lo = w.clone();
            lo[i] -= h;
            grad[i] = (cost.value(&hi).unwrap() - cost.value(&lo).unwrap()) / (2.0 * h);
        }
        grad
    }
}
