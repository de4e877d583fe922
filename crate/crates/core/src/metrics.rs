//! Extraction-quality evaluation: global demixing vector, performance
//! index, source matching.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::signal::SignalMatrix;

/// PI floor (dB) substituted for the logarithm of zero interference.
pub const PI_FLOOR_DB: f64 = -300.0;

/// Global demixing vector `g = Aᵀ w`: the composition of mixing and
/// extraction. Ideally one nonzero entry.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVector {
    g: Array1<f64>,
}

impl GlobalVector {
    pub fn components(&self) -> &Array1<f64> {
        &self.g
    }

    /// Unit-norm version `ĝ = g / ‖g‖` (so `ĝᵀĝ = 1`).
    pub fn normalized(&self) -> Array1<f64> {
        let norm = crate::linalg::vector_norm(&self.g);
        self.g.mapv(|v| v / norm)
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Computes `g = Aᵀ w`. Errors when `w` is zero or orthogonal to every
/// column of `A`.
pub fn global_vector(mixing: &Array2<f64>, w: ArrayView1<'_, f64>) -> Result<GlobalVector> {
    if mixing.nrows() != w.len() {
        return Err(Error::Config(format!(
            "mixing matrix has {} rows but w has {} components",
            mixing.nrows(),
            w.len()
        )));
    }
    let g = mixing.t().dot(&w);
    if crate::linalg::vector_norm(&g) == 0.0 {
        return Err(Error::Degenerate(
            "global vector is zero: w is orthogonal to every mixing column".into(),
        ));
    }
    Ok(GlobalVector { g })
}

/// Performance index in dB:
/// `PI = 10 log10( (1/(L-1)) (Σ_l g_l² / max_l g_l² - 1) )`,
/// clamped to [`PI_FLOOR_DB`] when the interference term vanishes.
pub fn performance_index(g: &GlobalVector) -> f64 {
    let squares: Vec<f64> = g.g.iter().map(|v| v * v).collect();
    let max = squares.iter().cloned().fold(0.0, f64::max);
    let sum: f64 = squares.iter().sum();
    let value = (sum / max - 1.0) / (squares.len() - 1) as f64;
    if value < 1e-30 {
        PI_FLOOR_DB
    } else {
        10.0 * value.log10()
    }
}

/// Pearson correlation between two equal-length sample sequences.
pub fn correlation(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "correlation inputs have different lengths: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Degenerate("correlation of a zero-variance sequence".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Finds the ground-truth source best matching an extracted signal:
/// returns the index maximizing |sample correlation| and the signed value.
pub fn match_source(y: &SignalMatrix, sources: &SignalMatrix) -> Result<(usize, f64)> {
    if y.channel_count() != 1 {
        return Err(Error::Config(format!(
            "extracted signal must have a single channel, got {}",
            y.channel_count()
        )));
    }
    match_source_view(y.channel(0), sources)
}

/// [`match_source`] on a bare sample view.
pub fn match_source_view(
    y: ArrayView1<'_, f64>,
    sources: &SignalMatrix,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for l in 0..sources.channel_count() {
        let c = correlation(y, sources.channel(l))?;
        if best.is_none_or(|(_, b)| c.abs() > b.abs()) {
            best = Some((l, c));
        }
    }
    Ok(best.expect("sources matrix is never empty"))
}
