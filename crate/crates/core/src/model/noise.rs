use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng;

/// Pre-drawn randomness for one subject's counterfactual projections,
/// indexed by posterior draw and horizon step. The same panel is reused for
/// every regime in a contrast so that differences reflect treatment only.
///
/// Besides the outcome / confounder / treatment panels, `psi_b` holds the
/// standard-normal deviates used to draw `(b^Y, b^M)` at each step.
/// `psi_a` is generated for completeness; regimes fix the treatment path
/// so it is never read.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePanel {
    pub n_draws: usize,
    pub tau: usize,
    pub q: usize,
    psi_y: Vec<f64>,
    psi_m: Vec<f64>,
    psi_a: Vec<f64>,
    psi_b: Vec<f64>,
}

impl NoisePanel {
    /// Draws a panel keyed by `(seed, keys...)`.
    pub fn generate(seed: u64, keys: &[u64], n_draws: usize, tau: usize, q: usize) -> Self {
        let mut path = keys.to_vec();
        path.push(rng::channel::NOISE_PANEL);
        let mut r = rng::stream(seed, &path);
        let cells = n_draws * tau;
        let mut psi_y = Vec::with_capacity(cells);
        let mut psi_m = Vec::with_capacity(cells);
        let mut psi_a = Vec::with_capacity(cells);
        let mut psi_b = Vec::with_capacity(cells * q);
        for _ in 0..cells {
            psi_y.push(r.sample::<f64, _>(StandardNormal));
            psi_m.push(r.random::<f64>());
            psi_a.push(r.random::<f64>());
            for _ in 0..q {
                psi_b.push(r.sample::<f64, _>(StandardNormal));
            }
        }
        Self { n_draws, tau, q, psi_y, psi_m, psi_a, psi_b }
    }

    /// A panel of all-zero normals and the given uniform, for noise-free checks.
    pub fn constant(n_draws: usize, tau: usize, q: usize, uniform: f64) -> Self {
        let cells = n_draws * tau;
        Self {
            n_draws,
            tau,
            q,
            psi_y: vec![0.0; cells],
            psi_m: vec![uniform; cells],
            psi_a: vec![uniform; cells],
            psi_b: vec![0.0; cells * q],
        }
    }

    pub fn row(&self, draw: usize) -> NoiseRow<'_> {
        assert!(draw < self.n_draws, "draw {draw} outside panel of {}", self.n_draws);
        let a = draw * self.tau;
        let b = a + self.tau;
        NoiseRow {
            q: self.q,
            psi_y: &self.psi_y[a..b],
            psi_m: &self.psi_m[a..b],
            psi_a: &self.psi_a[a..b],
            psi_b: &self.psi_b[a * self.q..b * self.q],
        }
    }
}

/// The panel row for one posterior draw.
#[derive(Clone, Copy, Debug)]
pub struct NoiseRow<'a> {
    pub q: usize,
    pub psi_y: &'a [f64],
    pub psi_m: &'a [f64],
    pub psi_a: &'a [f64],
    pub psi_b: &'a [f64],
}

impl NoiseRow<'_> {
    pub fn tau(&self) -> usize {
        self.psi_y.len()
    }

    pub fn b_normals(&self, step: usize) -> &[f64] {
        &self.psi_b[step * self.q..(step + 1) * self.q]
    }
}
