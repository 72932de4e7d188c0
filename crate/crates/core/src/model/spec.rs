use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three model channels of the joint model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Continuous outcome, identity link.
    Outcome,
    /// Binary time-varying confounder / observation indicator, logit link.
    Confounder,
    /// Binary treatment initiation hazard, logit link.
    Treatment,
}

/// One regressor column of a linear predictor.
///
/// Terms that read the treatment path use `A_{0:t}` in the outcome and
/// confounder channels and `A_{0:t-1}` in the treatment channel, because the
/// hazard at `t` may only depend on history strictly before `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureTerm {
    Intercept,
    /// Baseline covariate `V_j` (zero based).
    Baseline { index: usize },
    /// The interval index `t` as a real number.
    Time,
    /// Last present outcome strictly before `t`, or `fill` if none exists.
    LaggedOutcome { fill: f64 },
    /// `M_{t-1}` as 0/1.
    LaggedConfounder,
    /// Current treatment status.
    TreatmentIndicator,
    /// `1{min(sum_{s>=1} A_s, K) = dose}`.
    CumulativeDoseIndicator { dose: usize },
    Interaction {
        left: Box<FeatureTerm>,
        right: Box<FeatureTerm>,
    },
}

impl FeatureTerm {
    pub fn interaction(left: FeatureTerm, right: FeatureTerm) -> Self {
        FeatureTerm::Interaction {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            FeatureTerm::Interaction { left, right } => 1 + left.depth().max(right.depth()),
            _ => 0,
        }
    }

    /// True if evaluating this term reads the treatment path.
    pub fn uses_treatment(&self) -> bool {
        match self {
            FeatureTerm::TreatmentIndicator | FeatureTerm::CumulativeDoseIndicator { .. } => true,
            FeatureTerm::Interaction { left, right } => left.uses_treatment() || right.uses_treatment(),
            _ => false,
        }
    }

    pub fn uses_confounder(&self) -> bool {
        match self {
            FeatureTerm::LaggedConfounder => true,
            FeatureTerm::Interaction { left, right } => left.uses_confounder() || right.uses_confounder(),
            _ => false,
        }
    }

    pub fn max_baseline_index(&self) -> Option<usize> {
        match self {
            FeatureTerm::Baseline { index } => Some(*index),
            FeatureTerm::Interaction { left, right } => {
                match (left.max_baseline_index(), right.max_baseline_index()) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                }
            }
            _ => None,
        }
    }

    fn check(&self, max_dose: usize) -> Result<()> {
        match self {
            FeatureTerm::CumulativeDoseIndicator { dose } => {
                if *dose == 0 || *dose > max_dose {
                    return Err(Error::Spec(format!(
                        "cumulative dose indicator {dose} outside 1..={max_dose}"
                    )));
                }
            }
            FeatureTerm::LaggedOutcome { fill } if !fill.is_finite() => {
                return Err(Error::Spec("lagged outcome fill must be finite".into()));
            }
            FeatureTerm::Interaction { left, right } => {
                left.check(max_dose)?;
                right.check(max_dose)?;
            }
            _ => {}
        }
        if self.depth() > 2 {
            return Err(Error::Spec("interaction nesting deeper than 2".into()));
        }
        Ok(())
    }
}

/// Priors of the joint model. None of these come from the model's original
/// description; they are weakly informative defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    /// Normal(0, coef_sd^2) on every fixed-effect coefficient.
    pub coef_sd: f64,
    /// Half-normal scale for the outcome noise sd.
    pub sigma_scale: f64,
    /// Half-normal scale for each free random-effect sd.
    pub reff_sd_scale: f64,
    /// LKJ shape on the random-effect correlation matrix (1 = uniform).
    pub lkj_shape: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            coef_sd: 10.0,
            sigma_scale: 5.0,
            reff_sd_scale: 2.5,
            lkj_shape: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("coef_sd", self.coef_sd),
            ("sigma_scale", self.sigma_scale),
            ("reff_sd_scale", self.reff_sd_scale),
            ("lkj_shape", self.lkj_shape),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Spec(format!("prior {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Declarative description of the joint outcome / confounder / treatment model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub outcome_features: Vec<FeatureTerm>,
    #[serde(default)]
    pub confounder_features: Vec<FeatureTerm>,
    #[serde(default)]
    pub treatment_features: Vec<FeatureTerm>,
    #[serde(default)]
    pub outcome_reff_design: Vec<FeatureTerm>,
    #[serde(default)]
    pub confounder_reff_design: Vec<FeatureTerm>,
    #[serde(default)]
    pub treatment_reff_design: Vec<FeatureTerm>,
    #[serde(default)]
    pub confounder_enabled: bool,
    /// Largest cumulative dose tracked; higher doses saturate at this value.
    pub max_dose: usize,
    /// Posited variance of the treatment random effect.
    pub v: f64,
    #[serde(default)]
    pub priors: PriorSpec,
}

/// Positions of the random-effect blocks inside the concatenated vector
/// `(b^Y, b^M, b^A)`. The treatment block always comes last, so the active
/// coordinates (treatment block dropped when `v = 0`) are a prefix of the
/// full coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReffLayout {
    pub q_outcome: usize,
    pub q_confounder: usize,
    /// 1 if a treatment random effect is declared, else 0.
    pub q_treatment: usize,
    /// Whether the treatment block is part of the active parameterization.
    pub treatment_active: bool,
}

impl ReffLayout {
    pub fn full_dim(&self) -> usize {
        self.q_outcome + self.q_confounder + self.q_treatment
    }

    pub fn active_dim(&self) -> usize {
        self.q_outcome + self.q_confounder + usize::from(self.treatment_active)
    }

    /// Dimension of the `(b^Y, b^M)` part.
    pub fn dynamic_dim(&self) -> usize {
        self.q_outcome + self.q_confounder
    }

    pub fn outcome_range(&self) -> std::ops::Range<usize> {
        0..self.q_outcome
    }

    pub fn confounder_range(&self) -> std::ops::Range<usize> {
        self.q_outcome..self.q_outcome + self.q_confounder
    }

    /// Index of `b^A` in both full and active coordinates.
    pub fn treatment_index(&self) -> Option<usize> {
        (self.q_treatment == 1).then_some(self.q_outcome + self.q_confounder)
    }

    pub fn active_treatment_index(&self) -> Option<usize> {
        if self.treatment_active {
            self.treatment_index()
        } else {
            None
        }
    }
}

impl ModelSpec {
    /// Validates internal consistency; call after construction or parsing.
    pub fn validate(&self) -> Result<()> {
        if self.outcome_features.is_empty() {
            return Err(Error::Spec("outcome channel needs at least one feature".into()));
        }
        if !(self.v.is_finite() && self.v >= 0.0) {
            return Err(Error::Spec(format!("v must be a finite nonnegative real, got {}", self.v)));
        }
        self.priors.validate()?;
        let all = self
            .outcome_features
            .iter()
            .chain(&self.confounder_features)
            .chain(&self.treatment_features)
            .chain(&self.outcome_reff_design)
            .chain(&self.confounder_reff_design)
            .chain(&self.treatment_reff_design);
        for term in all {
            term.check(self.max_dose)?;
            if !self.confounder_enabled && term.uses_confounder() {
                return Err(Error::Spec(
                    "lagged_confounder term references the disabled confounder channel".into(),
                ));
            }
        }
        if !self.confounder_enabled
            && (!self.confounder_features.is_empty() || !self.confounder_reff_design.is_empty())
        {
            return Err(Error::Spec("confounder features given but the confounder channel is disabled".into()));
        }
        for (name, reff, fixed) in [
            ("outcome", &self.outcome_reff_design, &self.outcome_features),
            ("confounder", &self.confounder_reff_design, &self.confounder_features),
            ("treatment", &self.treatment_reff_design, &self.treatment_features),
        ] {
            for term in reff {
                if !fixed.contains(term) {
                    return Err(Error::Spec(format!(
                        "{name} random-effect term {term:?} is not among the {name} fixed-effect features"
                    )));
                }
            }
            for (i, a) in reff.iter().enumerate() {
                if reff[..i].contains(a) {
                    return Err(Error::Spec(format!("duplicate {name} random-effect term {a:?}")));
                }
            }
        }
        if self.treatment_reff_design.len() > 1 {
            return Err(Error::Spec("the treatment random effect must be scalar".into()));
        }
        if self.v > 0.0 && self.treatment_reff_design.is_empty() {
            return Err(Error::Spec("v > 0 requires a treatment random-effect design".into()));
        }
        Ok(())
    }

    pub fn features(&self, channel: Channel) -> &[FeatureTerm] {
        match channel {
            Channel::Outcome => &self.outcome_features,
            Channel::Confounder => &self.confounder_features,
            Channel::Treatment => &self.treatment_features,
        }
    }

    pub fn reff_design(&self, channel: Channel) -> &[FeatureTerm] {
        match channel {
            Channel::Outcome => &self.outcome_reff_design,
            Channel::Confounder => &self.confounder_reff_design,
            Channel::Treatment => &self.treatment_reff_design,
        }
    }

    pub fn treatment_modeled(&self) -> bool {
        !self.treatment_features.is_empty()
    }

    pub fn layout(&self) -> ReffLayout {
        ReffLayout {
            q_outcome: self.outcome_reff_design.len(),
            q_confounder: if self.confounder_enabled {
                self.confounder_reff_design.len()
            } else {
                0
            },
            q_treatment: self.treatment_reff_design.len().min(1),
            treatment_active: self.v > 0.0 && !self.treatment_reff_design.is_empty(),
        }
    }

    /// Number of baseline covariates the spec reads.
    pub fn required_baseline_len(&self) -> usize {
        self.outcome_features
            .iter()
            .chain(&self.confounder_features)
            .chain(&self.treatment_features)
            .filter_map(FeatureTerm::max_baseline_index)
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn with_v(&self, v: f64) -> Self {
        Self { v, ..self.clone() }
    }

    /// The outcome/treatment model of the two-interval simulation study:
    /// outcome on (1, V, t, dose==1, dose==2, lagged Y) with a random intercept,
    /// treatment hazard on (1, V, t, lagged Y) with a random intercept whose
    /// variance is the sensitivity value `v`.
    pub fn simulation_study(v: f64) -> Self {
        let lag = FeatureTerm::LaggedOutcome { fill: 0.0 };
        Self {
            outcome_features: vec![
                FeatureTerm::Intercept,
                FeatureTerm::Baseline { index: 0 },
                FeatureTerm::Time,
                FeatureTerm::CumulativeDoseIndicator { dose: 1 },
                FeatureTerm::CumulativeDoseIndicator { dose: 2 },
                lag.clone(),
            ],
            confounder_features: vec![],
            treatment_features: vec![
                FeatureTerm::Intercept,
                FeatureTerm::Baseline { index: 0 },
                FeatureTerm::Time,
                lag,
            ],
            outcome_reff_design: vec![FeatureTerm::Intercept],
            confounder_reff_design: vec![],
            treatment_reff_design: vec![FeatureTerm::Intercept],
            confounder_enabled: false,
            max_dose: 2,
            v,
            priors: PriorSpec::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ModelSpec serializes")
    }

    /// Parses and validates. Unknown term kinds or fields are spec errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("ModelSpec serializes");
        crate::sha256_hex(compact.as_bytes())
    }
}
