//! Lagged correlation estimation and predictor-weighted autocorrelation
//! functionals.

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalMatrix;

/// Sample estimate of a lagged correlation matrix `E{x[n] x[n-lag]ᵀ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCorrelation {
    matrix: Array2<f64>,
    lag: usize,
    symmetrized: bool,
    sample_count: usize,
}

impl LagCorrelation {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Wraps an externally supplied matrix (e.g. read from CSV) so it can
    /// enter a pencil. `symmetrized` must reflect the matrix's actual
    /// symmetry.
    pub fn from_matrix(matrix: Array2<f64>, lag: usize, symmetrized: bool) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Config(format!(
                "correlation matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("correlation matrix has non-finite entries".into()));
        }
        if symmetrized {
            for i in 0..matrix.nrows() {
                for j in 0..i {
                    if matrix[[i, j]] != matrix[[j, i]] {
                        return Err(Error::Config(
                            "matrix flagged symmetrized is not symmetric".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self { matrix, lag, symmetrized, sample_count: 0 })
    }
}

/// Estimates `R_xx[lag] = (1/(N-lag)) Σ_n x[n] x[n-lag]ᵀ` over the valid
/// sample range; with `symmetrize` the estimate is replaced by
/// `(R + Rᵀ)/2`.
pub fn estimate_lag_correlation(
    x: &SignalMatrix,
    lag: usize,
    symmetrize: bool,
) -> Result<LagCorrelation> {
    let n = x.sample_count();
    if lag >= n / 2 {
        return Err(Error::Config(format!(
            "lag {lag} out of range for {n} samples (need lag < N/2)"
        )));
    }
    let data = x.data();
    let late = data.slice(s![.., lag..]);
    let early = data.slice(s![.., ..n - lag]);
    let mut r = late.dot(&early.t());
    r.mapv_inplace(|v| v / (n - lag) as f64);
    let matrix = if symmetrize { crate::linalg::symmetrize(&r) } else { r };
    Ok(LagCorrelation { matrix, lag, symmetrized: symmetrize, sample_count: n - lag })
}

/// Raw autocorrelation estimates `r[k] = (1/(N-k)) Σ_n x[n] x[n-k]` for
/// `k = 0..=max_lag` of a single channel.
pub fn autocorrelation(x: ArrayView1<'_, f64>, max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag >= n {
        return Err(Error::Config(format!(
            "max lag {max_lag} out of range for {n} samples"
        )));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut acc = 0.0;
        for i in k..n {
            acc += x[i] * x[i - k];
        }
        out.push(acc / (n - k) as f64);
    }
    Ok(out)
}

/// Coefficients of the two linear predictors. The leading taps
/// `b_0 = d_0 = 1` are implicit and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorCoeffs {
    pub b: Vec<f64>,
    pub d: Vec<f64>,
}

impl PredictorCoeffs {
    pub fn new(b: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if b.is_empty() || d.is_empty() {
            return Err(Error::Config("predictor coefficient vectors must be non-empty".into()));
        }
        if b.iter().chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("predictor coefficients must be finite".into()));
        }
        Ok(Self { b, d })
    }

    /// One-step-ahead second predictor `d = [1]`.
    pub fn with_one_step_secondary(b: Vec<f64>) -> Result<Self> {
        Self::new(b, vec![1.0])
    }

    /// `q_c = Σ_p b_p²` with the implicit `b_0 = 1`.
    pub fn q_c(&self) -> f64 {
        1.0 + self.b.iter().map(|v| v * v).sum::<f64>()
    }

    /// `a_c = Σ_p d_p²` with the implicit `d_0 = 1`.
    pub fn a_c(&self) -> f64 {
        1.0 + self.d.iter().map(|v| v * v).sum::<f64>()
    }
}

/// The sign table `s_pq`: +1 when `p = 0` or `q = 0`, −1 otherwise.
pub fn pair_sign(p: usize, q: usize) -> f64 {
    if p == 0 || q == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `Σ_{p≠q} s_pq c_p c_q rho[|q-p|]` where `taps = [1, c_1, ..., c_P]`.
///
/// This is the correlation functional that the prediction-error expansion
/// leaves after the common power term is split off; evaluated per source
/// it yields the numerator/denominator of the normalised autocorrelation.
pub fn lagged_cross_sum(taps: &[f64], rho: &[f64]) -> f64 {
    let len = taps.len();
    debug_assert!(rho.len() >= len);
    let mut acc = 0.0;
    for p in 0..len {
        for q in 0..len {
            if p == q {
                continue;
            }
            acc += pair_sign(p, q) * taps[p] * taps[q] * rho[q.abs_diff(p)];
        }
    }
    acc
}

fn taps_with_unit_lead(coeffs: &[f64]) -> Vec<f64> {
    let mut taps = Vec::with_capacity(coeffs.len() + 1);
    taps.push(1.0);
    taps.extend_from_slice(coeffs);
    taps
}

/// Per-source normalised autocorrelation values `r̂_l / r̃_l` under the
/// given predictor pair, estimated from the source signals themselves.
///
/// Errors when any `r̃_l` is not strictly positive relative to the source
/// power — the positivity assumption the extraction proof rests on.
pub fn normalized_autocorrelations(
    sources: &SignalMatrix,
    coeffs: &PredictorCoeffs,
) -> Result<Vec<f64>> {
    let b_taps = taps_with_unit_lead(&coeffs.b);
    let d_taps = taps_with_unit_lead(&coeffs.d);
    let max_lag = coeffs.b.len().max(coeffs.d.len());
    let mut out = Vec::with_capacity(sources.channel_count());
    for l in 0..sources.channel_count() {
        let rho = autocorrelation(sources.channel(l), max_lag)?;
        let r_hat = lagged_cross_sum(&b_taps, &rho);
        let r_tilde = lagged_cross_sum(&d_taps, &rho);
        let tolerance = 1e-6 * rho[0];
        if r_tilde <= tolerance {
            return Err(Error::PositivityViolation(format!(
                "source {l}: denominator correlation r~ = {r_tilde:.3e} <= {tolerance:.3e}; \
                 the source must correlate positively at the predictor lags"
            )));
        }
        out.push(r_hat / r_tilde);
    }
    Ok(out)
}
