//! Helpers shared by the integration suites.
#![allow(dead_code)]

use gcca_core::signal::SourceFilter;
use ndarray::Array2;

/// The three bundled source filters: AR(1) poles 0.6 and 0.75 plus a
/// double-pole-0.8 AR(2). Distinct positive lag-1 autocorrelations
/// (0.6, 0.75, 0.976).
pub fn preset_filters() -> Vec<SourceFilter> {
    vec![
        SourceFilter::all_pole(vec![1.0, -0.6]),
        SourceFilter::all_pole(vec![1.0, -0.75]),
        SourceFilter::all_pole(vec![1.0, -1.6, 0.64]),
    ]
}

/// Primary predictor taps of the benchmark configuration.
pub fn benchmark_taps() -> Vec<f64> {
    vec![-0.4548, -1.0053, 1.1957, -0.5590, -0.3617]
}

/// Benchmark 3x3 mixing matrix (rows get normalized to unit length by
/// the callers that need that).
pub fn benchmark_mixing() -> Array2<f64> {
    ndarray::array![
        [0.9207, 0.0299, 0.3891],
        [0.5165, 0.3676, 0.7733],
        [0.7822, -0.2735, -0.5598]
    ]
}

/// Centered moving average with the given window (in curve points).
pub fn smoothed(curve: &[f64], window: usize) -> Vec<f64> {
    if curve.len() < window || window == 0 {
        return curve.to_vec();
    }
    let mut out = Vec::with_capacity(curve.len() - window + 1);
    let mut acc: f64 = curve[..window].iter().sum();
    out.push(acc / window as f64);
    for i in window..curve.len() {
        acc += curve[i] - curve[i - window];
        out.push(acc / window as f64);
    }
    out
}

/// Largest increase between consecutive points (0 for a non-increasing
/// curve).
pub fn max_rise(curve: &[f64]) -> f64 {
    curve.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Non-increasing within a tolerance of 2% of the curve's dynamic range
/// (at least 0.02 dB), absorbing Monte-Carlo jitter of the averaged
/// curve while still failing on genuine divergence.
pub fn non_increasing_within_jitter(curve: &[f64]) -> (bool, f64, f64) {
    let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    let tolerance = (0.02 * (max - min)).max(0.02);
    let rise = max_rise(curve);
    (rise <= tolerance, rise, tolerance)
}

/// Prints one pass/fail line for an acceptance criterion and panics on
/// failure.
pub fn report(criterion: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion}: {status} — {detail}");
    assert!(pass, "acceptance {criterion} failed: {detail}");
}
