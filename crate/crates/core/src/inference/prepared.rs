//! Design matrices of the observed data, evaluated once before sampling.

use crate::error::{Error, Result};
use crate::heterogeneity::{treatment_upto, SubjectTerms};
use crate::linalg;
use crate::model::design::fill_rows;
use crate::model::{Channel, LongDataset, ModelSpec};

/// Rows of one channel for one subject, stored row-major.
#[derive(Clone, Debug, Default)]
pub struct ChannelRows {
    pub intervals: Vec<usize>,
    pub response: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub p: usize,
    pub q: usize,
}

impl ChannelRows {
    fn new(p: usize, q: usize) -> Self {
        Self { p, q, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn x_row(&self, r: usize) -> &[f64] {
        &self.x[r * self.p..(r + 1) * self.p]
    }

    pub fn z_row(&self, r: usize) -> &[f64] {
        &self.z[r * self.q..(r + 1) * self.q]
    }

    fn push(&mut self, interval: usize, response: f64, x: &[f64], z: &[f64]) {
        self.intervals.push(interval);
        self.response.push(response);
        self.x.extend_from_slice(x);
        self.z.extend_from_slice(z);
    }
}

#[derive(Clone, Debug)]
pub struct PreparedSubject {
    pub id: String,
    pub outcome: ChannelRows,
    pub confounder: ChannelRows,
    pub treatment: ChannelRows,
}

impl PreparedSubject {
    /// Likelihood terms at the given coefficients (active layout of `spec`).
    pub fn terms(&self, spec: &ModelSpec, beta_y: &[f64], sigma: f64, beta_m: &[f64], beta_a: &[f64]) -> SubjectTerms {
        let mut terms = SubjectTerms::new(spec.layout(), sigma);
        let o = &self.outcome;
        for r in 0..o.len() {
            terms.push_outcome(o.intervals[r], o.response[r], linalg::dot(o.x_row(r), beta_y), o.z_row(r));
        }
        let c = &self.confounder;
        for r in 0..c.len() {
            terms.push_confounder(c.intervals[r], c.response[r] > 0.5, linalg::dot(c.x_row(r), beta_m), c.z_row(r));
        }
        let a = &self.treatment;
        for r in 0..a.len() {
            let z = a.z_row(r).first().copied().unwrap_or(0.0);
            terms.push_treatment(a.intervals[r], a.response[r] > 0.5, linalg::dot(a.x_row(r), beta_a), z);
        }
        terms
    }
}

/// Evaluates every observed-data row of every subject.
pub fn prepare(data: &LongDataset, spec: &ModelSpec) -> Result<Vec<PreparedSubject>> {
    let mut out = Vec::with_capacity(data.subjects.len());
    let (mut x, mut z) = (Vec::new(), Vec::new());
    for s in &data.subjects {
        let view = s.view();
        let tmax = s.n_intervals();
        let mut outcome = ChannelRows::new(spec.outcome_features.len(), spec.outcome_reff_design.len());
        let mut confounder = ChannelRows::new(spec.confounder_features.len(), spec.confounder_reff_design.len());
        let mut treatment = ChannelRows::new(spec.treatment_features.len(), spec.treatment_reff_design.len());
        let wrap = |e: Error, t: usize| match e {
            Error::Spec(_) => e,
            other => Error::Data(format!("subject {} interval {t}: {other}", s.id)),
        };
        for t in 1..=tmax {
            let observed = !spec.confounder_enabled || s.m[t];
            if let (Some(y), true) = (s.y[t], observed) {
                fill_rows(spec, Channel::Outcome, &view, t, &mut x, &mut z).map_err(|e| wrap(e, t))?;
                outcome.push(t, y, &x, &z);
            }
            if spec.confounder_enabled {
                fill_rows(spec, Channel::Confounder, &view, t, &mut x, &mut z).map_err(|e| wrap(e, t))?;
                confounder.push(t, f64::from(u8::from(s.m[t])), &x, &z);
            }
        }
        if spec.treatment_modeled() && tmax >= 1 {
            for t in 1..=treatment_upto(&s.a, tmax) {
                fill_rows(spec, Channel::Treatment, &view, t, &mut x, &mut z).map_err(|e| wrap(e, t))?;
                treatment.push(t, f64::from(u8::from(s.a[t])), &x, &z);
            }
        }
        out.push(PreparedSubject { id: s.id.clone(), outcome, confounder, treatment });
    }
    Ok(out)
}
