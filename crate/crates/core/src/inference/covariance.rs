//! Unconstrained parameterization of the active random-effect covariance
//! `G = D C D`, with `D` the diagonal of standard deviations and `C` a
//! correlation matrix built from canonical partial correlations.
//!
//! The treatment standard deviation, when active, is pinned at `sqrt(v)` and
//! the corresponding diagonal entry of `G` is set to `v` exactly.

use nalgebra::DMatrix;

use crate::model::PriorSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceParam {
    dim: usize,
    /// Index and exact variance of a pinned coordinate.
    pinned: Option<(usize, f64)>,
}

impl CovarianceParam {
    pub fn new(dim: usize, pinned: Option<(usize, f64)>) -> Self {
        if let Some((i, var)) = pinned {
            assert!(i < dim && var > 0.0, "pinned coordinate must be in range with positive variance");
        }
        Self { dim, pinned }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sd(&self) -> usize {
        self.dim - usize::from(self.pinned.is_some())
    }

    pub fn n_corr(&self) -> usize {
        self.dim * self.dim.saturating_sub(1) / 2
    }

    /// Length of the unconstrained vector: free log-sds then atanh of the
    /// canonical partial correlations (row-major strict lower triangle).
    pub fn n_params(&self) -> usize {
        self.n_sd() + self.n_corr()
    }

    fn free_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).filter(move |i| self.pinned.map_or(true, |(p, _)| p != *i))
    }

    /// Unconstrained vector for the given free standard deviations and zero correlations.
    pub fn initial(&self, sd: f64) -> Vec<f64> {
        let mut theta = vec![sd.ln(); self.n_sd()];
        theta.resize(self.n_params(), 0.0);
        theta
    }

    pub fn sds(&self, theta: &[f64]) -> Vec<f64> {
        let mut sd = vec![0.0; self.dim];
        for (k, i) in self.free_indices().enumerate() {
            sd[i] = theta[k].exp();
        }
        if let Some((p, var)) = self.pinned {
            sd[p] = var.sqrt();
        }
        sd
    }

    /// Cholesky factor of the correlation matrix.
    pub fn corr_cholesky(&self, theta: &[f64]) -> DMatrix<f64> {
        let z = &theta[self.n_sd()..];
        let k = self.dim;
        let mut l = DMatrix::zeros(k, k);
        let mut idx = 0;
        for i in 0..k {
            let mut used = 0.0f64;
            for j in 0..i {
                let v = z[idx].tanh() * (1.0 - used).max(0.0).sqrt();
                idx += 1;
                l[(i, j)] = v;
                used += v * v;
            }
            l[(i, i)] = (1.0 - used).max(0.0).sqrt();
        }
        l
    }

    /// Cholesky factor of `G`.
    pub fn cholesky(&self, theta: &[f64]) -> DMatrix<f64> {
        let sd = self.sds(theta);
        let mut l = self.corr_cholesky(theta);
        for i in 0..self.dim {
            for j in 0..=i {
                l[(i, j)] *= sd[i];
            }
        }
        l
    }

    /// `G` with exact unit correlations on the diagonal and the pinned variance.
    pub fn matrix(&self, theta: &[f64]) -> DMatrix<f64> {
        let sd = self.sds(theta);
        let l = self.corr_cholesky(theta);
        let mut c = &l * l.transpose();
        for i in 0..self.dim {
            c[(i, i)] = 1.0;
        }
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                let v = sd[i] * sd[j] * c[(i, j)];
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        if let Some((p, var)) = self.pinned {
            g[(p, p)] = var;
        }
        g
    }

    /// Log prior density in the unconstrained coordinates, up to a constant:
    /// half-normal on each free sd (with the log Jacobian) and an LKJ prior
    /// on the correlation matrix expressed through its partial correlations.
    pub fn log_prior(&self, theta: &[f64], priors: &PriorSpec) -> f64 {
        let s2 = priors.reff_sd_scale * priors.reff_sd_scale;
        let mut lp = 0.0;
        for &t in &theta[..self.n_sd()] {
            let sd = t.exp();
            lp += -0.5 * sd * sd / s2 + t;
        }
        let z = &theta[self.n_sd()..];
        let k = self.dim as f64;
        let mut idx = 0;
        for i in 0..self.dim {
            for j in 0..i {
                let beta = priors.lkj_shape + (k - 2.0 - j as f64) / 2.0;
                let r = z[idx].tanh();
                lp += beta * (1.0 - r * r).max(f64::MIN_POSITIVE).ln();
                idx += 1;
            }
        }
        lp
    }

    /// Recovers the unconstrained vector from a covariance over the same
    /// coordinates (inverse of [`Self::matrix`]).
    pub fn unconstrain(&self, g: &DMatrix<f64>) -> Option<Vec<f64>> {
        let chol = g.clone().cholesky()?;
        let l = chol.l();
        let mut theta = Vec::with_capacity(self.n_params());
        for i in self.free_indices() {
            theta.push(0.5 * g[(i, i)].ln());
        }
        for i in 0..self.dim {
            let row_norm = (0..=i).map(|j| l[(i, j)] * l[(i, j)]).sum::<f64>().sqrt();
            let mut used = 0.0f64;
            for j in 0..i {
                let v = l[(i, j)] / row_norm;
                let z = v / (1.0 - used).max(f64::MIN_POSITIVE).sqrt();
                theta.push(z.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh());
                used += v * v;
            }
        }
        Some(theta)
    }
}
