use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::linalg;

/// One set of population-level parameters of the joint model.
///
/// `g` is the covariance of the full random-effect vector `(b^Y, b^M, b^A)`.
/// Its treatment diagonal entry equals the posited `v`; with `v = 0` the
/// treatment row and column are identically zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDraw {
    pub beta_y: Vec<f64>,
    pub sigma: f64,
    #[serde(default)]
    pub beta_m: Vec<f64>,
    #[serde(default)]
    pub beta_a: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub g: DMatrix<f64>,
}

impl ParamsDraw {
    /// Checks dimensions against `spec` and the covariance invariants.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let layout = spec.layout();
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Spec(format!("{name} has length {got}, spec needs {want}")))
            }
        };
        expect("beta_y", self.beta_y.len(), spec.outcome_features.len())?;
        expect("beta_m", self.beta_m.len(), spec.confounder_features.len())?;
        expect("beta_a", self.beta_a.len(), spec.treatment_features.len())?;
        expect("G", self.g.nrows(), layout.full_dim())?;
        expect("G columns", self.g.ncols(), layout.full_dim())?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Spec(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if self.beta_y.iter().chain(&self.beta_m).chain(&self.beta_a).any(|b| !b.is_finite()) {
            return Err(Error::Spec("non-finite coefficient".into()));
        }
        if !linalg::is_symmetric(&self.g, 1e-12) {
            return Err(Error::Matrix("G is not symmetric".into()));
        }
        linalg::clamp_psd(&self.g)?;
        if let Some(ia) = layout.treatment_index() {
            if self.g[(ia, ia)] != spec.v {
                return Err(Error::Matrix(format!(
                    "G[b^A, b^A] = {} differs from v = {}",
                    self.g[(ia, ia)],
                    spec.v
                )));
            }
            if spec.v == 0.0 && (0..self.g.nrows()).any(|j| self.g[(ia, j)] != 0.0 || self.g[(j, ia)] != 0.0) {
                return Err(Error::Matrix("v = 0 but the b^A row of G is not zero".into()));
            }
        }
        Ok(())
    }

    /// Covariance over the active random-effect coordinates.
    pub fn active_g(&self, spec: &ModelSpec) -> DMatrix<f64> {
        let k = spec.layout().active_dim();
        self.g.view((0, 0), (k, k)).into_owned()
    }

    /// Zero-valued parameters of the right shape (G zero except the b^A entry).
    pub fn zeros(spec: &ModelSpec, sigma: f64) -> Self {
        let layout = spec.layout();
        let mut g = DMatrix::zeros(layout.full_dim(), layout.full_dim());
        if let Some(ia) = layout.treatment_index() {
            g[(ia, ia)] = spec.v;
        }
        Self {
            beta_y: vec![0.0; spec.outcome_features.len()],
            sigma,
            beta_m: vec![0.0; spec.confounder_features.len()],
            beta_a: vec![0.0; spec.treatment_features.len()],
            g,
        }
    }

    /// Row-major lower triangle of G.
    pub fn g_lower(&self) -> Vec<f64> {
        let n = self.g.nrows();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                out.push(self.g[(i, j)]);
            }
        }
        out
    }
}

/// (De)serializes a matrix as a list of rows.
pub mod matrix_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
    }
}
