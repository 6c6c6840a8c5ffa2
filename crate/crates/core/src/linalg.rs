//! Small dense linear-algebra and statistics helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Subtracts each column's mean.
pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// Cholesky factorization, retrying once with `1e-10 * trace / n` added to the
/// diagonal.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1) as f64;
    let jitter = 1e-10 * m.trace().abs().max(f64::MIN_POSITIVE) / n;
    let mut j = m.clone();
    for i in 0..m.nrows() {
        j[(i, i)] += jitter;
    }
    Cholesky::new(j).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Symmetrizes in place by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, prob)
}

pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn randn<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws from N(mean, Σ) given the lower Cholesky factor of Σ.
pub fn mvn_from_cov_factor<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    cov_lower: &DMatrix<f64>,
) -> DVector<f64> {
    mean + cov_lower * standard_normal_vector(rng, mean.len())
}

/// Draws from N(P⁻¹b, P⁻¹) given a precision matrix P and linear term b.
pub fn mvn_from_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    what: &str,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(precision, what)?;
    let mean = chol.solve(linear);
    let z = standard_normal_vector(rng, linear.len());
    // Lᵀ u = z gives u ~ N(0, P⁻¹)
    let u = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical(format!("triangular solve failed in {what}")))?;
    Ok(mean + u)
}

/// Draws from an inverse-gamma with the given shape and scale
/// (density ∝ x^{-shape-1} e^{-scale/x}).
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::Numerical(format!("inverse-gamma({shape}, {scale}): {e}")))?;
    Ok(1.0 / g.sample(rng))
}
