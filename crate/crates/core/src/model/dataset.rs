//! Long-format longitudinal data: one row per (subject, interval).

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::design::HistoryView;
use super::spec::ModelSpec;
use crate::error::{Error, Result};

/// One subject's record. Vectors are indexed by interval `0..=T_i`; index 0
/// carries baseline values (`Y_0`, `M_0`, `A_0`).
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub baseline: Vec<f64>,
    pub y: Vec<Option<f64>>,
    /// Observation indicator; structurally `true` when the confounder channel is off.
    pub m: Vec<bool>,
    pub a: Vec<bool>,
}

impl SubjectRecord {
    /// Number of follow-up intervals `T_i`.
    pub fn n_intervals(&self) -> usize {
        self.y.len().saturating_sub(1)
    }

    /// First interval with `A_t = 1` (`s_i`), or `None` if never treated.
    pub fn initiation(&self) -> Option<usize> {
        self.a.iter().position(|&x| x)
    }

    pub fn view(&self) -> HistoryView<'_> {
        HistoryView {
            baseline: &self.baseline,
            y: &self.y,
            m: &self.m,
            a: &self.a,
        }
    }

    /// Copy holding outcomes/confounders through `t` and treatment through `h`.
    pub fn truncated(&self, t: usize, h: usize) -> SubjectRecord {
        SubjectRecord {
            id: self.id.clone(),
            baseline: self.baseline.clone(),
            y: self.y[..=t].to_vec(),
            m: self.m[..=t].to_vec(),
            a: self.a[..=h].to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LongDataset {
    pub subjects: Vec<SubjectRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    NonMonotoneTreatment,
    OutcomePresence,
    NonFiniteOutcome,
    BaselineLength,
    NoFollowUp,
    LengthMismatch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub subject: String,
    pub interval: Option<usize>,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn count(&self, kind: IssueKind) -> usize {
        self.issues.iter().filter(|i| i.kind == kind).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.issues {
            match i.interval {
                Some(t) => writeln!(f, "subject {} interval {}: {}", i.subject, t, i.message)?,
                None => writeln!(f, "subject {}: {}", i.subject, i.message)?,
            }
        }
        Ok(())
    }
}

/// Lists every violated dataset invariant. Never fails.
pub fn validate_dataset(data: &LongDataset, spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |s: &SubjectRecord, interval: Option<usize>, kind: IssueKind, message: String| {
        report.issues.push(ValidationIssue { subject: s.id.clone(), interval, kind, message });
    };
    let p = data.subjects.first().map(|s| s.baseline.len());
    let needed = spec.required_baseline_len();
    for s in &data.subjects {
        if Some(s.baseline.len()) != p {
            push(s, None, IssueKind::BaselineLength, format!(
                "baseline has {} covariates, expected {}", s.baseline.len(), p.unwrap_or(0)
            ));
        }
        if s.baseline.len() < needed {
            push(s, None, IssueKind::BaselineLength, format!(
                "model reads {needed} baseline covariates, record has {}", s.baseline.len()
            ));
        }
        if s.y.len() != s.m.len() || s.y.len() != s.a.len() || s.y.is_empty() {
            push(s, None, IssueKind::LengthMismatch, "Y, M and A have different lengths".into());
            continue;
        }
        if s.n_intervals() < 1 {
            push(s, None, IssueKind::NoFollowUp, "no follow-up intervals".into());
        }
        for t in 1..s.a.len() {
            if s.a[t - 1] && !s.a[t] {
                push(s, Some(t), IssueKind::NonMonotoneTreatment, "treatment stops after initiation".into());
            }
        }
        for (t, y) in s.y.iter().enumerate() {
            if let Some(v) = y {
                if !v.is_finite() {
                    push(s, Some(t), IssueKind::NonFiniteOutcome, format!("outcome {v} is not finite"));
                }
            }
            if spec.confounder_enabled && t >= 1 && y.is_some() != s.m[t] {
                let msg = if s.m[t] { "M = 1 but Y is absent" } else { "Y present where M = 0" };
                push(s, Some(t), IssueKind::OutcomePresence, msg.into());
            }
        }
    }
    report
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl LongDataset {
    pub fn n_baseline(&self) -> usize {
        self.subjects.first().map_or(0, |s| s.baseline.len())
    }

    pub fn find(&self, id: &str) -> Option<(usize, &SubjectRecord)> {
        self.subjects.iter().enumerate().find(|(_, s)| s.id == id)
    }

    /// Writes `id,interval,V1..Vp,Y,M,A`; absent outcomes are empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let p = self.n_baseline();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "interval".to_string()];
        header.extend((1..=p).map(|j| format!("V{j}")));
        header.extend(["Y", "M", "A"].map(String::from));
        w.write_record(&header)?;
        for s in &self.subjects {
            for t in 0..s.y.len() {
                let mut row = vec![s.id.clone(), t.to_string()];
                row.extend(s.baseline.iter().map(|&v| fmt_num(v)));
                row.push(s.y[t].map(fmt_num).unwrap_or_default());
                row.push(u8::from(s.m[t]).to_string());
                row.push(u8::from(s.a[t]).to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the long format. Rows of a subject must be contiguous and
    /// ordered by interval starting at 0. An empty `M` cell means the
    /// indicator is structurally 1.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let n = cols.len();
        if n < 5 || cols[0] != "id" || cols[1] != "interval" || cols[n - 3..] != ["Y", "M", "A"] {
            return Err(Error::Data("header must be id,interval,V1..Vp,Y,M,A".into()));
        }
        let p = n - 5;
        for (j, c) in cols[2..2 + p].iter().enumerate() {
            if *c != format!("V{}", j + 1) {
                return Err(Error::Data(format!("unexpected column {c}, expected V{}", j + 1)));
            }
        }
        let mut subjects: Vec<SubjectRecord> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let num = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("row {row}: cannot parse {:?} in column {}", &rec[i], cols[i]))
                })
            };
            let bit = |i: usize, empty: bool| -> Result<bool> {
                match rec[i].trim() {
                    "" => Ok(empty),
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Data(format!("row {row}: {} must be 0/1, got {other:?}", cols[i]))),
                }
            };
            let id = rec[0].to_string();
            let interval: usize = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("row {row}: bad interval {:?}", &rec[1])))?;
            let y = if rec[n - 3].trim().is_empty() { None } else { Some(num(n - 3)?) };
            let m = bit(n - 2, true)?;
            let a = bit(n - 1, false)?;
            let continuing = subjects.last().is_some_and(|s| s.id == id);
            if !continuing {
                if interval != 0 {
                    return Err(Error::Data(format!("row {row}: subject {id} must start at interval 0")));
                }
                if subjects.iter().any(|s| s.id == id) {
                    return Err(Error::Data(format!("row {row}: rows of subject {id} are not contiguous")));
                }
                let baseline = (0..p).map(|j| num(2 + j)).collect::<Result<Vec<_>>>()?;
                subjects.push(SubjectRecord { id, baseline, y: vec![y], m: vec![m], a: vec![a] });
            } else {
                let s = subjects.last_mut().expect("continuing subject exists");
                if interval != s.y.len() {
                    return Err(Error::Data(format!(
                        "row {row}: subject {id} interval {interval} out of order (expected {})",
                        s.y.len()
                    )));
                }
                s.y.push(y);
                s.m.push(m);
                s.a.push(a);
            }
        }
        Ok(LongDataset { subjects })
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
