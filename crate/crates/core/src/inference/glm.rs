//! Per-channel regressions ignoring random effects, used to initialize the
//! sampler and to shape its random-walk proposals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, sigmoid};

use super::prepared::ChannelRows;

/// Point estimate with the inverse of the (penalized) information.
#[derive(Clone, Debug)]
pub struct GlmFit {
    pub coef: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub scale: f64,
}

fn rows<'a>(blocks: impl Iterator<Item = &'a ChannelRows> + Clone) -> (usize, usize) {
    let p = blocks.clone().next().map_or(0, |b| b.p);
    (blocks.map(ChannelRows::len).sum(), p)
}

/// Least squares with a `N(0, prior_sd^2)` ridge; returns the residual sd as `scale`.
pub fn linear<'a>(blocks: impl Iterator<Item = &'a ChannelRows> + Clone, prior_sd: f64) -> Result<GlmFit> {
    let (n, p) = rows(blocks.clone());
    if n == 0 {
        return Err(Error::Fit("no usable outcome observations".into()));
    }
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for b in blocks.clone() {
        for r in 0..b.len() {
            let x = b.x_row(r);
            for i in 0..p {
                xty[i] += x[i] * b.response[r];
                for j in 0..p {
                    xtx[(i, j)] += x[i] * x[j];
                }
            }
        }
    }
    let ridge = 1.0 / (prior_sd * prior_sd);
    let info = &xtx + DMatrix::identity(p, p) * ridge;
    let inv = linalg::spd_inverse(&info)?;
    let coef = &inv * &xty;
    let mut ssr = 0.0;
    for b in blocks {
        for r in 0..b.len() {
            let e = b.response[r] - linalg::dot(b.x_row(r), coef.as_slice());
            ssr += e * e;
        }
    }
    let dof = (n as f64 - p as f64).max(1.0);
    let scale = (ssr / dof).sqrt().max(1e-3);
    Ok(GlmFit { coef: coef.as_slice().to_vec(), cov: inv * (scale * scale), scale })
}

/// Logistic regression by Newton's method with a `N(0, prior_sd^2)` ridge,
/// which keeps the estimate finite under separation.
pub fn logistic<'a>(blocks: impl Iterator<Item = &'a ChannelRows> + Clone, prior_sd: f64, what: &str) -> Result<GlmFit> {
    let (n, p) = rows(blocks.clone());
    if n == 0 {
        return Err(Error::Fit(format!("no usable {what} observations")));
    }
    let ridge = 1.0 / (prior_sd * prior_sd);
    let mut beta = DVector::<f64>::zeros(p);
    let mut info = DMatrix::<f64>::zeros(p, p);
    for _ in 0..100 {
        let mut grad = -&beta * ridge;
        info = DMatrix::identity(p, p) * ridge;
        for b in blocks.clone() {
            for r in 0..b.len() {
                let x = b.x_row(r);
                let mu = sigmoid(linalg::dot(x, beta.as_slice()));
                let w = mu * (1.0 - mu);
                for i in 0..p {
                    grad[i] += (b.response[r] - mu) * x[i];
                    for j in 0..p {
                        info[(i, j)] += w * x[i] * x[j];
                    }
                }
            }
        }
        let step = linalg::cholesky(&info)?.solve(&grad);
        beta += &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fit(format!("{what} regression did not converge")));
    }
    Ok(GlmFit { coef: beta.as_slice().to_vec(), cov: linalg::spd_inverse(&info)?, scale: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(x: &[[f64; 2]], y: &[f64]) -> ChannelRows {
        ChannelRows {
            intervals: vec![1; y.len()],
            response: y.to_vec(),
            x: x.iter().flatten().copied().collect(),
            z: vec![],
            p: 2,
            q: 0,
        }
    }

    #[test]
    fn linear_recovers_exact_line() {
        let x = [[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let y = [1.0, 3.0, 5.0, 7.0];
        let b = block(&x, &y);
        let fit = linear(std::iter::once(&b), 1e8).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-8 && (fit.coef[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn logistic_score_vanishes_at_estimate() {
        let x = [[1.0, -1.0], [1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 0.5]];
        let y = [0.0, 1.0, 0.0, 1.0, 1.0];
        let b = block(&x, &y);
        let fit = logistic(std::iter::once(&b), 1e6, "test").unwrap();
        let mut score = [0.0; 2];
        for r in 0..5 {
            let mu = sigmoid(fit.coef[0] * x[r][0] + fit.coef[1] * x[r][1]);
            score[0] += (y[r] - mu) * x[r][0];
            score[1] += (y[r] - mu) * x[r][1];
        }
        assert!(score.iter().all(|s| s.abs() < 1e-6), "{score:?}");
    }

    #[test]
    fn empty_channel_is_fit_error() {
        let b = ChannelRows { p: 2, ..Default::default() };
        assert!(matches!(logistic(std::iter::once(&b), 10.0, "treatment"), Err(Error::Fit(_))));
    }
}
