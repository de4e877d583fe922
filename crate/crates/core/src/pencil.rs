//! Batch extraction on correlation-matrix pencils.
//!
//! The demixing vector that maximises a lagged-correlation ratio
//! `wᵀ N w / wᵀ D w` is the top generalized eigenvector of the pencil
//! `(N, D)`. The solver factors the denominator `D = L Lᵀ` and runs a
//! cyclic Jacobi eigendecomposition on `L⁻¹ N L⁻ᵀ`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::SignalMatrix;
use crate::stats::{estimate_lag_correlation, LagCorrelation};

/// Relative threshold on the denominator's smallest eigenvalue.
const PD_THRESHOLD: f64 = 1e-10;
/// Relative eigen-residual guarantee per pair.
const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Relative gap under which eigenvalues are reported as degenerate.
const TIE_THRESHOLD: f64 = 1e-8;

/// Eigenpairs of a (numerator, denominator) correlation pencil.
#[derive(Debug, Clone)]
pub struct PencilSolution {
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
    numerator_lags: Vec<usize>,
    denominator_lags: Vec<usize>,
    degenerate: bool,
}

impl PencilSolution {
    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// Unit-norm eigenvectors as columns, ordered like the eigenvalues.
    /// The first nonzero component of each column is positive.
    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigenvectors
    }

    pub fn top_eigenvector(&self) -> Array1<f64> {
        self.eigenvectors.column(0).to_owned()
    }

    pub fn bottom_eigenvector(&self) -> Array1<f64> {
        self.eigenvectors.column(self.eigenvectors.ncols() - 1).to_owned()
    }

    pub fn numerator_lags(&self) -> &[usize] {
        &self.numerator_lags
    }

    pub fn denominator_lags(&self) -> &[usize] {
        &self.denominator_lags
    }

    /// True when two eigenvalues coincide within the tie threshold; the
    /// extraction order is then not identifiable.
    pub fn has_degenerate_eigenvalues(&self) -> bool {
        self.degenerate
    }
}

/// Solves the generalized eigenvector problem `N w = λ D w` for a pair of
/// symmetrized correlation estimates. The denominator must be positive
/// definite.
pub fn solve_pencil(
    numerator: &LagCorrelation,
    denominator: &LagCorrelation,
) -> Result<PencilSolution> {
    solve_weighted_pencil(&[(1.0, numerator)], &[(1.0, denominator)])
}

/// Solves the pencil built from weighted sums of lagged correlation
/// matrices, `N = Σ c_k R[Δ_k]` and likewise for the denominator. The
/// combined denominator is validated positive definite.
pub fn solve_weighted_pencil(
    numerator_terms: &[(f64, &LagCorrelation)],
    denominator_terms: &[(f64, &LagCorrelation)],
) -> Result<PencilSolution> {
    let numerator = combine(numerator_terms, "numerator")?;
    let denominator = combine(denominator_terms, "denominator")?;
    if numerator.nrows() != denominator.nrows() {
        return Err(Error::Config(format!(
            "pencil dimensions differ: {} vs {}",
            numerator.nrows(),
            denominator.nrows()
        )));
    }

    let (den_vals, _) = linalg::jacobi_eigh(&denominator)?;
    let trace = denominator.diag().sum();
    let smallest = den_vals[den_vals.len() - 1];
    if smallest <= PD_THRESHOLD * trace.max(0.0) || trace <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "pencil denominator is not positive definite: smallest eigenvalue \
             {smallest:.3e} <= {PD_THRESHOLD:.0e} x trace {trace:.3e}"
        )));
    }

    let l = linalg::cholesky(&denominator)?;
    // C = L⁻¹ N L⁻ᵀ, assembled column by column
    let n_dim = numerator.nrows();
    let mut c = Array2::zeros((n_dim, n_dim));
    for j in 0..n_dim {
        let col = numerator.column(j).to_owned();
        let y = linalg::solve_lower(&l, &col);
        c.column_mut(j).assign(&y);
    }
    let mut ct = Array2::zeros((n_dim, n_dim));
    for j in 0..n_dim {
        let row = c.row(j).to_owned();
        let y = linalg::solve_lower(&l, &row);
        ct.column_mut(j).assign(&y);
    }
    let c = linalg::symmetrize(&ct);

    let (eigenvalues, u) = linalg::jacobi_eigh(&c)?;
    let mut eigenvectors = Array2::zeros((n_dim, n_dim));
    for j in 0..n_dim {
        let back = linalg::solve_lower_transpose(&l, &u.column(j).to_owned());
        let norm = linalg::vector_norm(&back);
        eigenvectors.column_mut(j).assign(&back.mapv(|v| v / norm));
    }
    canonicalize_signs(&mut eigenvectors);

    let num_norm = linalg::frobenius_norm(&numerator);
    for j in 0..n_dim {
        let w = eigenvectors.column(j).to_owned();
        let residual = &numerator.dot(&w) - &denominator.dot(&w).mapv(|v| v * eigenvalues[j]);
        let res_norm = linalg::vector_norm(&residual);
        if res_norm > RESIDUAL_TOLERANCE * num_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(format!(
                "eigen residual {res_norm:.3e} exceeds {RESIDUAL_TOLERANCE:.0e} x ||N||_F"
            )));
        }
    }

    let scale = eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut degenerate = false;
    for i in 1..n_dim {
        if (eigenvalues[i - 1] - eigenvalues[i]).abs() <= TIE_THRESHOLD * scale {
            degenerate = true;
            log::warn!(
                "pencil eigenvalues {} and {} coincide ({:.6e} vs {:.6e}); \
                 extraction order is not identifiable",
                i - 1,
                i,
                eigenvalues[i - 1],
                eigenvalues[i]
            );
        }
    }

    Ok(PencilSolution {
        eigenvalues,
        eigenvectors,
        numerator_lags: collect_lags(numerator_terms),
        denominator_lags: collect_lags(denominator_terms),
        degenerate,
    })
}

/// The correlation-ratio cost `wᵀ N w / wᵀ D w` evaluated on a pair of
/// estimates. Scale invariant in `w`.
pub fn correlation_ratio(
    numerator: &LagCorrelation,
    denominator: &LagCorrelation,
    w: &Array1<f64>,
) -> Result<f64> {
    let num = w.dot(&numerator.matrix().dot(w));
    let den = w.dot(&denominator.matrix().dot(w));
    if den == 0.0 {
        return Err(Error::Degenerate("correlation ratio with zero denominator".into()));
    }
    Ok(num / den)
}

/// Which lag normalises the extraction cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionMode {
    /// Variance normalisation: denominator `R_xx[0]`.
    Cca,
    /// Lagged self-correlation normalisation: denominator `R_xx[Δ0]`,
    /// `Δ0 ≠ 0`, which cancels white noise.
    Gcca,
}

/// Batch extraction of one source: solves the pencil
/// `(R_xx[Δ1], R_xx[Δ0])` and returns the top eigenvector together with
/// the extracted signal `y[n] = wᵀ x[n]`.
///
/// An exactly rank-deficient input (for instance one source copied to
/// every channel) is first reduced to the subspace actually carrying
/// energy at the denominator lag; a denominator that is indefinite on
/// that subspace is an error.
pub fn extract_batch(
    x: &SignalMatrix,
    delta0: usize,
    delta1: usize,
    mode: ExtractionMode,
) -> Result<(Array1<f64>, SignalMatrix)> {
    match mode {
        ExtractionMode::Cca if delta0 != 0 => {
            return Err(Error::Config("cca mode requires delta0 = 0".into()));
        }
        ExtractionMode::Gcca if delta0 == 0 => {
            return Err(Error::Config(
                "gcca mode requires delta0 != 0 (normalisation by a lagged correlation)".into(),
            ));
        }
        _ => {}
    }
    if delta0 == delta1 {
        return Err(Error::Config("delta0 and delta1 must differ".into()));
    }

    let denominator = estimate_lag_correlation(x, delta0, true)?;
    let (den_vals, den_vecs) = linalg::jacobi_eigh(denominator.matrix())?;
    let scale = den_vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let kept: Vec<usize> = (0..den_vals.len())
        .filter(|&i| den_vals[i].abs() > PD_THRESHOLD * scale)
        .collect();

    if kept.len() == x.channel_count() {
        let numerator = estimate_lag_correlation(x, delta1, true)?;
        let solution = solve_pencil(&numerator, &denominator)?;
        let w = solution.top_eigenvector();
        let y = project(x, &w);
        return Ok((w, y));
    }

    // exact rank deficiency: restrict to the energetic subspace
    let mut basis = Array2::zeros((x.channel_count(), kept.len()));
    for (dst, &src) in kept.iter().enumerate() {
        basis.column_mut(dst).assign(&den_vecs.column(src));
    }
    let reduced = SignalMatrix::new(basis.t().dot(x.data()))?;
    let num_r = estimate_lag_correlation(&reduced, delta1, true)?;
    let den_r = estimate_lag_correlation(&reduced, delta0, true)?;
    let solution = solve_pencil(&num_r, &den_r)?;
    let mut w = basis.dot(&solution.top_eigenvector());
    let norm = linalg::vector_norm(&w);
    w.mapv_inplace(|v| v / norm);
    canonicalize_vector(&mut w);
    let y = project(x, &w);
    Ok((w, y))
}

/// Removes an extracted component from the mixtures using a lagged
/// projection coefficient:
/// `x - â y` with `â = (Σ x[n] y[n-lag]) / (Σ y[n] y[n-lag])`.
/// The lagged estimator keeps additive white noise out of `â`.
pub fn deflate(x: &SignalMatrix, y: &SignalMatrix, lag: usize) -> Result<SignalMatrix> {
    if y.channel_count() != 1 {
        return Err(Error::Config(format!(
            "deflation signal must have one channel, got {}",
            y.channel_count()
        )));
    }
    if lag < 1 {
        return Err(Error::Config("deflation lag must be >= 1".into()));
    }
    let n = x.sample_count();
    if y.sample_count() != n {
        return Err(Error::Config("deflation signals have different lengths".into()));
    }
    if lag >= n {
        return Err(Error::Config(format!("lag {lag} out of range for {n} samples")));
    }
    let yv = y.channel(0);
    let mut den = 0.0;
    let mut power = 0.0;
    for i in 0..n {
        power += yv[i] * yv[i];
        if i >= lag {
            den += yv[i] * yv[i - lag];
        }
    }
    if den.abs() <= 1e-12 * power {
        return Err(Error::Degenerate(format!(
            "deflation denominator {den:.3e} vanishes relative to signal power {power:.3e}"
        )));
    }
    let xd = x.data();
    let mut residual = xd.clone();
    for m in 0..x.channel_count() {
        let mut num = 0.0;
        for i in lag..n {
            num += xd[[m, i]] * yv[i - lag];
        }
        let coeff = num / den;
        for i in 0..n {
            residual[[m, i]] -= coeff * yv[i];
        }
    }
    SignalMatrix::new(residual)
}

/// One recovered component of a sequential separation.
#[derive(Debug, Clone)]
pub struct Extraction {
    /// Demixing vector in the original channel space.
    pub w: Array1<f64>,
    /// Extracted signal, 1 × N.
    pub y: SignalMatrix,
}

/// Recovers `count` sources by repeating extraction and deflation.
///
/// Before each round the residual is projected onto the principal
/// subspace of its lag-0 correlation with as many dimensions as sources
/// remain, so the pencil denominator stays positive definite as deflation
/// empties out directions.
pub fn extract_all(
    x: &SignalMatrix,
    count: usize,
    delta0: usize,
    delta1: usize,
    mode: ExtractionMode,
) -> Result<Vec<Extraction>> {
    if count == 0 || count > x.channel_count() {
        return Err(Error::Config(format!(
            "cannot extract {count} sources from {} channels",
            x.channel_count()
        )));
    }
    let deflation_lag = delta0.max(1);
    let mut residual = x.clone();
    let mut out = Vec::with_capacity(count);
    for round in 0..count {
        let remaining = count - round;
        let r0 = estimate_lag_correlation(&residual, 0, true)?;
        let (_, vecs) = linalg::jacobi_eigh(r0.matrix())?;
        let mut basis = Array2::zeros((residual.channel_count(), remaining));
        for j in 0..remaining {
            basis.column_mut(j).assign(&vecs.column(j));
        }
        let reduced = SignalMatrix::new(basis.t().dot(residual.data()))?;
        let (w_reduced, y) = if remaining == 1 {
            (Array1::from_elem(1, 1.0), reduced.clone())
        } else {
            extract_batch(&reduced, delta0, delta1, mode)?
        };
        let mut w = basis.dot(&w_reduced);
        let norm = linalg::vector_norm(&w);
        w.mapv_inplace(|v| v / norm);
        canonicalize_vector(&mut w);
        if round + 1 < count {
            residual = deflate(&residual, &y, deflation_lag)?;
        }
        out.push(Extraction { w, y });
    }
    Ok(out)
}

fn combine(terms: &[(f64, &LagCorrelation)], side: &str) -> Result<Array2<f64>> {
    if terms.is_empty() {
        return Err(Error::Config(format!("pencil {side} has no terms")));
    }
    let dim = terms[0].1.dim();
    let mut acc = Array2::zeros((dim, dim));
    for (weight, term) in terms {
        if !term.symmetrized() {
            return Err(Error::Config(format!(
                "pencil {side} requires symmetrized correlation estimates (lag {})",
                term.lag()
            )));
        }
        if term.dim() != dim {
            return Err(Error::Config(format!(
                "pencil {side} mixes dimensions {} and {}",
                dim,
                term.dim()
            )));
        }
        acc.scaled_add(*weight, term.matrix());
    }
    Ok(acc)
}

fn collect_lags(terms: &[(f64, &LagCorrelation)]) -> Vec<usize> {
    let mut lags: Vec<usize> = terms.iter().map(|(_, t)| t.lag()).collect();
    lags.sort_unstable();
    lags.dedup();
    lags
}

fn project(x: &SignalMatrix, w: &Array1<f64>) -> SignalMatrix {
    let y = x.data().t().dot(w);
    SignalMatrix::new(y.insert_axis(ndarray::Axis(0))).expect("projection of valid signal")
}

fn canonicalize_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.columns_mut() {
        let scale = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
    }
}

fn canonicalize_vector(w: &mut Array1<f64>) {
    let scale = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if let Some(first) = w.iter().find(|v| v.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            w.mapv_inplace(|v| -v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::match_source;
    use crate::signal::{generate_sources, mix, MixtureModel, SourceFilter, SourceSpec};
    use crate::stats::LagCorrelation;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn preset_sources(seed: u64, length: usize) -> SignalMatrix {
        generate_sources(&SourceSpec {
            filters: vec![
                SourceFilter::all_pole(vec![1.0, -0.6]),
                SourceFilter::all_pole(vec![1.0, -0.75]),
                SourceFilter::all_pole(vec![1.0, -1.6, 0.64]),
            ],
            seed,
            length,
            normalize_power: true,
        })
        .unwrap()
    }

    fn lag_corr(matrix: Array2<f64>, lag: usize) -> LagCorrelation {
        LagCorrelation::from_matrix(matrix, lag, true).unwrap()
    }

    #[test]
    fn diagonal_pencil_against_identity() {
        let num = lag_corr(array![[2.0, 0.0], [0.0, 1.0]], 2);
        let den = lag_corr(Array2::eye(2), 1);
        let sol = solve_pencil(&num, &den).unwrap();
        assert!((sol.eigenvalues()[0] - 2.0).abs() < 1e-12);
        assert!((sol.eigenvalues()[1] - 1.0).abs() < 1e-12);
        assert!((sol.eigenvectors()[[0, 0]] - 1.0).abs() < 1e-10);
        assert!((sol.eigenvectors()[[1, 1]] - 1.0).abs() < 1e-10);
        assert_eq!(sol.numerator_lags(), &[2]);
        assert_eq!(sol.denominator_lags(), &[1]);
    }

    #[test]
    fn identity_pencil_has_unit_eigenvalues() {
        let spd = array![[3.0, 1.0, 0.2], [1.0, 2.5, -0.3], [0.2, -0.3, 1.8]];
        let num = lag_corr(spd.clone(), 2);
        let den = lag_corr(spd, 1);
        let sol = solve_pencil(&num, &den).unwrap();
        for v in sol.eigenvalues() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // an identity pencil is maximally degenerate
        assert!(sol.has_degenerate_eigenvalues());
    }

    #[test]
    fn two_by_two_matches_closed_form() {
        // roots of det(N - t D) for 2x2 via the quadratic formula
        let n = array![[2.0, 0.7], [0.7, 1.0]];
        let d = array![[1.5, 0.2], [0.2, 0.9]];
        let sol = solve_pencil(&lag_corr(n.clone(), 2), &lag_corr(d.clone(), 1)).unwrap();
        let a = d[[0, 0]] * d[[1, 1]] - d[[0, 1]] * d[[1, 0]];
        let b = -(n[[0, 0]] * d[[1, 1]] + n[[1, 1]] * d[[0, 0]]
            - n[[0, 1]] * d[[1, 0]]
            - n[[1, 0]] * d[[0, 1]]);
        let c = n[[0, 0]] * n[[1, 1]] - n[[0, 1]] * n[[1, 0]];
        let disc = (b * b - 4.0 * a * c).sqrt();
        let hi = (-b + disc) / (2.0 * a);
        let lo = (-b - disc) / (2.0 * a);
        assert!((sol.eigenvalues()[0] - hi).abs() <= 1e-12 * hi.abs());
        assert!((sol.eigenvalues()[1] - lo).abs() <= 1e-12 * lo.abs());
    }

    #[test]
    fn indefinite_denominator_is_named() {
        let num = lag_corr(Array2::eye(2), 2);
        let den = lag_corr(array![[1.0, 0.0], [0.0, -0.5]], 1);
        match solve_pencil(&num, &den) {
            Err(Error::NotPositiveDefinite(msg)) => {
                assert!(msg.contains("positive definite"));
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn ratio_is_scale_invariant_and_maximized_by_top_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut g = Array2::zeros((3, 3));
        for v in g.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let num_m = crate::linalg::symmetrize(&g.t().dot(&g));
        let mut h = Array2::zeros((3, 3));
        for v in h.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let den_m = &crate::linalg::symmetrize(&h.t().dot(&h)) + &(Array2::<f64>::eye(3) * 0.5);
        let num = lag_corr(num_m, 2);
        let den = lag_corr(den_m, 1);
        let sol = solve_pencil(&num, &den).unwrap();
        let w_top = sol.top_eigenvector();
        let j_top = correlation_ratio(&num, &den, &w_top).unwrap();

        for c in [2.0, -0.3, 1e6] {
            let scaled = w_top.mapv(|v| c * v);
            let j = correlation_ratio(&num, &den, &scaled).unwrap();
            assert!((j - j_top).abs() <= 1e-12 * j_top.abs());
        }

        for _ in 0..1000 {
            let mut w: Array1<f64> = Array1::zeros(3);
            for v in w.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let j = correlation_ratio(&num, &den, &w).unwrap();
            assert!(j <= j_top + 1e-10 * j_top.abs());
        }
    }

    #[test]
    fn eigenvector_signs_are_canonical() {
        let num = lag_corr(array![[1.0, -0.9], [-0.9, 1.0]], 2);
        let den = lag_corr(Array2::eye(2), 1);
        let sol = solve_pencil(&num, &den).unwrap();
        for j in 0..2 {
            let col = sol.eigenvectors().column(j);
            let first = col.iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn rank_one_mixture_recovers_the_source() {
        let spec = SourceSpec {
            filters: vec![SourceFilter::all_pole(vec![1.0, -0.75])],
            seed: 5,
            length: 20_000,
            normalize_power: true,
        };
        let s = generate_sources(&spec).unwrap();
        let mut copied = Array2::zeros((3, s.sample_count()));
        for m in 0..3 {
            copied.row_mut(m).assign(&s.channel(0));
        }
        let x = SignalMatrix::new(copied).unwrap();
        let (_, y) = extract_batch(&x, 1, 2, ExtractionMode::Gcca).unwrap();
        let (idx, c) = match_source(&y, &s).unwrap();
        assert_eq!(idx, 0);
        assert!(c.abs() >= 0.999);
    }

    #[test]
    fn noise_free_two_source_extraction() {
        let spec = SourceSpec {
            filters: vec![
                SourceFilter::all_pole(vec![1.0, -0.6]),
                SourceFilter::all_pole(vec![1.0, -1.6, 0.64]),
            ],
            seed: 41,
            length: 10_000,
            normalize_power: true,
        };
        let s = generate_sources(&spec).unwrap();
        let model = MixtureModel::random(2, 2, 0.0, 7).unwrap();
        let x = mix(&model, &s, 0).unwrap();
        let (_, y) = extract_batch(&x, 1, 2, ExtractionMode::Gcca).unwrap();
        let (_, c) = match_source(&y, &s).unwrap();
        assert!(c.abs() >= 0.99);
    }

    #[test]
    fn extraction_targets_largest_normalized_autocorrelation() {
        // with delta0=1, delta1=2 the normalized values are the pole values
        // 0.6, 0.75 and 0.944; the double-pole source must come out first
        let s = preset_sources(3, 20_000);
        let model = MixtureModel::random(3, 3, 0.0, 11).unwrap();
        let x = mix(&model, &s, 0).unwrap();
        let (_, y) = extract_batch(&x, 1, 2, ExtractionMode::Gcca).unwrap();
        let (idx, _) = match_source(&y, &s).unwrap();
        assert_eq!(idx, 2);
    }

    #[test]
    fn deflate_exact_rank_one() {
        let spec = SourceSpec {
            filters: vec![SourceFilter::all_pole(vec![1.0, -0.6])],
            seed: 2,
            length: 5000,
            normalize_power: true,
        };
        let y = generate_sources(&spec).unwrap();
        let mut x = Array2::zeros((2, y.sample_count()));
        x.row_mut(0).assign(&y.channel(0).mapv(|v| 1.5 * v));
        x.row_mut(1).assign(&y.channel(0).mapv(|v| -0.4 * v));
        let x = SignalMatrix::new(x).unwrap();
        let residual = deflate(&x, &y, 1).unwrap();
        let res_norm = residual.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let x_norm = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res_norm <= 1e-8 * x_norm);
    }

    #[test]
    fn deflate_zero_signal_rejected() {
        let x = SignalMatrix::new(Array2::from_elem((2, 100), 1.0)).unwrap();
        let y = SignalMatrix::new(Array2::zeros((1, 100))).unwrap();
        assert!(matches!(deflate(&x, &y, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn deflation_leaves_the_other_source() {
        let spec = SourceSpec {
            filters: vec![
                SourceFilter::all_pole(vec![1.0, -0.6]),
                SourceFilter::all_pole(vec![1.0, -1.6, 0.64]),
            ],
            seed: 19,
            length: 20_000,
            normalize_power: true,
        };
        let s = generate_sources(&spec).unwrap();
        let a = array![[1.0, 0.6], [0.3, 1.0]];
        let model = MixtureModel::new(a.clone(), 0.0).unwrap();
        let x = mix(&model, &s, 0).unwrap();
        // perfect demixing vector for source 0: row 0 of A⁻¹
        let det = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]];
        let w = array![a[[1, 1]] / det, -a[[0, 1]] / det];
        let y0 = SignalMatrix::new(
            x.data().t().dot(&w).insert_axis(ndarray::Axis(0)),
        )
        .unwrap();
        let residual = deflate(&x, &y0, 1).unwrap();
        for m in 0..2 {
            let c1 = crate::metrics::correlation(residual.channel(m), s.channel(1)).unwrap();
            let c0 = crate::metrics::correlation(residual.channel(m), s.channel(0)).unwrap();
            assert!(c1.abs() >= 0.99, "channel {m} corr with source 1 = {c1}");
            assert!(c0.abs() <= 0.05, "channel {m} corr with source 0 = {c0}");
        }
    }

    #[test]
    fn full_separation_noise_free() {
        let s = preset_sources(59, 10_000);
        let model = MixtureModel::random(3, 3, 0.0, 23).unwrap();
        let x = mix(&model, &s, 0).unwrap();
        let extractions = extract_all(&x, 3, 1, 2, ExtractionMode::Gcca).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for e in &extractions {
            let (idx, c) = match_source(&e.y, &s).unwrap();
            assert!(c.abs() >= 0.99, "source {idx} corr {c}");
            seen.insert(idx);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn weighted_pencil_combines_lags() {
        let s = preset_sources(71, 20_000);
        let model = MixtureModel::random(3, 3, 0.09, 31).unwrap();
        let x = mix(&model, &s, 1).unwrap();
        let r1 = estimate_lag_correlation(&x, 1, true).unwrap();
        let r2 = estimate_lag_correlation(&x, 2, true).unwrap();
        let r3 = estimate_lag_correlation(&x, 3, true).unwrap();
        let sol = solve_weighted_pencil(&[(1.0, &r2), (0.5, &r3)], &[(1.0, &r1)]).unwrap();
        assert_eq!(sol.numerator_lags(), &[2, 3]);
        let w = sol.top_eigenvector();
        let y = SignalMatrix::new(x.data().t().dot(&w).insert_axis(ndarray::Axis(0))).unwrap();
        let (idx, c) = match_source(&y, &s).unwrap();
        assert_eq!(idx, 2);
        assert!(c.abs() > 0.9);
    }
}
