//! Domain types shared by every other module: datasets, model
//! specifications, parameter draws, regimes and noise panels.

pub mod dataset;
pub mod design;
pub mod noise;
pub mod params;
pub mod regime;
pub mod spec;

pub use dataset::{validate_dataset, IssueKind, LongDataset, SubjectRecord, ValidationIssue, ValidationReport};
pub use design::{build_design_row, build_reff_row, HistoryView};
pub use noise::{NoisePanel, NoiseRow};
pub use params::ParamsDraw;
pub use regime::{Regime, RegimeContext};
pub use spec::{Channel, FeatureTerm, ModelSpec, PriorSpec, ReffLayout};
