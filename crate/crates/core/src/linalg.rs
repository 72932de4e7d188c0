//! Small dense linear-algebra and scalar helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below `-PSD_TOLERANCE` are treated as genuine violations.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `outcome` under logit `eta`.
#[inline]
pub fn bernoulli_logit_ll(outcome: bool, eta: f64) -> f64 {
    if outcome {
        eta - log1p_exp(eta)
    } else {
        -log1p_exp(eta)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let a = m[(i, j)];
            let b = m[(j, i)];
            if (a - b).abs() > tol * (1.0 + a.abs().max(b.abs())) {
                return false;
            }
        }
    }
    true
}

/// Cholesky factor (lower) of a symmetric positive-definite matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::Matrix(format!("matrix of order {} is not positive definite", m.nrows())))
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    Ok(symmetrize(&cholesky(m)?.inverse()))
}

/// Checks symmetric PSD up to [`PSD_TOLERANCE`] and floors tiny negative
/// eigenvalues at zero. Matrices that are already PSD are returned untouched.
pub fn clamp_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(m, 1e-9) {
        return Err(Error::Matrix("matrix is not symmetric".into()));
    }
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let scale = m.amax().max(1.0);
    let eig = symmetrize(m).symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(m.clone());
    }
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::Matrix(format!("smallest eigenvalue {min:e} below tolerance")));
    }
    let floored = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    Ok(symmetrize(&rebuilt))
}

/// Lower-triangular square root usable for sampling from a PSD covariance;
/// falls back to an eigen factor when the matrix is singular.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let m = clamp_psd(m)?;
    let eig = m.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0)
}

/// Linear-interpolation sample quantile (type 7).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty sample");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let h = (sorted.len() as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_dvector(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log1p_exp_matches_naive_in_safe_range() {
        for &x in &[-30.0, -2.0, 0.0, 1.5, 30.0] {
            let naive = (1.0f64 + f64::exp(x)).ln();
            assert!((log1p_exp(x) - naive).abs() < 1e-12);
        }
        assert_eq!(log1p_exp(1000.0), 1000.0);
    }

    #[test]
    fn clamp_psd_floors_tiny_negative_and_rejects_large() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-12]);
        let c = clamp_psd(&m).unwrap();
        assert!(c.symmetric_eigen().eigenvalues.min() >= -1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(clamp_psd(&bad).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }
}
