//! Regressor evaluation on observed or counterfactual histories.

use super::spec::{Channel, FeatureTerm, ModelSpec};
use crate::error::{Error, Result};

/// Borrowed view of one subject's history. All slices are indexed by
/// interval with index 0 holding baseline values; `y[t]` is `None` when the
/// outcome is absent.
#[derive(Clone, Copy, Debug)]
pub struct HistoryView<'a> {
    pub baseline: &'a [f64],
    pub y: &'a [Option<f64>],
    pub m: &'a [bool],
    pub a: &'a [bool],
}

impl HistoryView<'_> {
    /// Last present outcome at an index strictly below `t`.
    pub fn last_outcome_before(&self, t: usize) -> Option<f64> {
        self.y[..t.min(self.y.len())].iter().rev().find_map(|v| *v)
    }

    /// `sum_{s=1..=upto} A_s`.
    pub fn cumulative_dose(&self, upto: usize) -> Result<usize> {
        if upto >= self.a.len() {
            return Err(Error::Data(format!("treatment path missing interval {upto}")));
        }
        Ok(self.a[1..=upto].iter().filter(|&&x| x).count())
    }
}

fn treatment_time(channel: Channel, t: usize) -> usize {
    match channel {
        Channel::Treatment => t - 1,
        _ => t,
    }
}

/// Value of a single term at interval `t` (`t >= 1`).
pub fn evaluate_term(
    term: &FeatureTerm,
    channel: Channel,
    history: &HistoryView<'_>,
    t: usize,
    max_dose: usize,
) -> Result<f64> {
    Ok(match term {
        FeatureTerm::Intercept => 1.0,
        FeatureTerm::Baseline { index } => *history.baseline.get(*index).ok_or_else(|| {
            Error::Spec(format!("baseline covariate {index} not present in history"))
        })?,
        FeatureTerm::Time => t as f64,
        FeatureTerm::LaggedOutcome { fill } => history.last_outcome_before(t).unwrap_or(*fill),
        FeatureTerm::LaggedConfounder => {
            let m = history
                .m
                .get(t - 1)
                .ok_or_else(|| Error::Data(format!("confounder history missing interval {}", t - 1)))?;
            f64::from(u8::from(*m))
        }
        FeatureTerm::TreatmentIndicator => {
            let s = treatment_time(channel, t);
            let a = history
                .a
                .get(s)
                .ok_or_else(|| Error::Data(format!("treatment path missing interval {s}")))?;
            f64::from(u8::from(*a))
        }
        FeatureTerm::CumulativeDoseIndicator { dose } => {
            let s = treatment_time(channel, t);
            let d = history.cumulative_dose(s)?.min(max_dose);
            f64::from(u8::from(d == *dose))
        }
        FeatureTerm::Interaction { left, right } => {
            evaluate_term(left, channel, history, t, max_dose)?
                * evaluate_term(right, channel, history, t, max_dose)?
        }
    })
}

fn check_channel(spec: &ModelSpec, channel: Channel, t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::Spec("design rows are defined for intervals t >= 1".into()));
    }
    if channel == Channel::Confounder && !spec.confounder_enabled {
        return Err(Error::Spec("design row requested for the disabled confounder channel".into()));
    }
    Ok(())
}

fn eval_terms(
    terms: &[FeatureTerm],
    spec: &ModelSpec,
    channel: Channel,
    history: &HistoryView<'_>,
    t: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    for term in terms {
        out.push(evaluate_term(term, channel, history, t, spec.max_dose)?);
    }
    Ok(())
}

/// Fixed-effects regressor vector of `channel` at interval `t`.
pub fn build_design_row(
    spec: &ModelSpec,
    channel: Channel,
    history: &HistoryView<'_>,
    t: usize,
) -> Result<Vec<f64>> {
    check_channel(spec, channel, t)?;
    let mut out = Vec::with_capacity(spec.features(channel).len());
    eval_terms(spec.features(channel), spec, channel, history, t, &mut out)?;
    Ok(out)
}

/// Random-effects design vector of `channel` at interval `t`.
pub fn build_reff_row(
    spec: &ModelSpec,
    channel: Channel,
    history: &HistoryView<'_>,
    t: usize,
) -> Result<Vec<f64>> {
    check_channel(spec, channel, t)?;
    let mut out = Vec::with_capacity(spec.reff_design(channel).len());
    eval_terms(spec.reff_design(channel), spec, channel, history, t, &mut out)?;
    Ok(out)
}

/// Both rows at once, writing into caller buffers.
pub fn fill_rows(
    spec: &ModelSpec,
    channel: Channel,
    history: &HistoryView<'_>,
    t: usize,
    x: &mut Vec<f64>,
    z: &mut Vec<f64>,
) -> Result<()> {
    check_channel(spec, channel, t)?;
    eval_terms(spec.features(channel), spec, channel, history, t, x)?;
    eval_terms(spec.reff_design(channel), spec, channel, history, t, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_row() {
        let mut spec = ModelSpec::simulation_study(0.0);
        spec.outcome_features = vec![FeatureTerm::Intercept];
        spec.outcome_reff_design = vec![];
        let h = HistoryView { baseline: &[0.3], y: &[Some(1.0)], m: &[true], a: &[false, true] };
        assert_eq!(build_design_row(&spec, Channel::Outcome, &h, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn simulation_outcome_row_by_hand() {
        // V=1, t=2, Y_1=0.5, one dose so far
        let spec = ModelSpec::simulation_study(0.0);
        let y = [Some(-0.2), Some(0.5), None];
        let h = HistoryView { baseline: &[1.0], y: &y, m: &[true; 3], a: &[false, false, true] };
        let row = build_design_row(&spec, Channel::Outcome, &h, 2).unwrap();
        assert_eq!(row, vec![1.0, 1.0, 2.0, 1.0, 0.0, 0.5]);
    }

    #[test]
    fn simulation_treatment_row_by_hand() {
        let mut spec = ModelSpec::simulation_study(0.0);
        spec.treatment_features = vec![
            FeatureTerm::Baseline { index: 0 },
            FeatureTerm::Time,
            FeatureTerm::LaggedOutcome { fill: 0.0 },
        ];
        spec.treatment_reff_design.clear();
        spec.validate().unwrap();
        let h = HistoryView { baseline: &[0.0], y: &[Some(0.0)], m: &[true], a: &[false] };
        let row = build_design_row(&spec, Channel::Treatment, &h, 1).unwrap();
        assert_eq!(row, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn lagged_outcome_carries_forward_and_fills() {
        let h = HistoryView {
            baseline: &[],
            y: &[None, Some(2.0), None, None],
            m: &[false, true, false, false],
            a: &[false; 4],
        };
        let lag = FeatureTerm::LaggedOutcome { fill: -9.0 };
        assert_eq!(evaluate_term(&lag, Channel::Outcome, &h, 1, 2).unwrap(), -9.0);
        assert_eq!(evaluate_term(&lag, Channel::Outcome, &h, 3, 2).unwrap(), 2.0);
    }

    #[test]
    fn dose_saturates_at_max() {
        let h = HistoryView { baseline: &[], y: &[None; 5], m: &[true; 5], a: &[false, true, true, true, true] };
        let d2 = FeatureTerm::CumulativeDoseIndicator { dose: 2 };
        assert_eq!(evaluate_term(&d2, Channel::Outcome, &h, 4, 2).unwrap(), 1.0);
        // the treatment channel only sees A up to t-1
        let d1 = FeatureTerm::CumulativeDoseIndicator { dose: 1 };
        assert_eq!(evaluate_term(&d1, Channel::Treatment, &h, 2, 2).unwrap(), 1.0);
    }

    #[test]
    fn disabled_confounder_channel_is_spec_error() {
        let spec = ModelSpec::simulation_study(0.0);
        let h = HistoryView { baseline: &[0.0], y: &[Some(0.0)], m: &[true], a: &[false] };
        assert!(matches!(
            build_design_row(&spec, Channel::Confounder, &h, 1),
            Err(Error::Spec(_))
        ));
    }
}
