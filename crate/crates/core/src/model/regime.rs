//! Deterministic treatment rules.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::design::HistoryView;
use crate::error::Error;

/// What a regime may look at when deciding treatment at interval `t`:
/// the history strictly before `t` and the subject's observed path.
#[derive(Clone, Copy, Debug)]
pub struct RegimeContext<'a> {
    pub t: usize,
    /// History with `y`, `m` and `a` covering intervals `0..t`.
    pub history: HistoryView<'a>,
    pub observed_a: &'a [bool],
}

type RuleFn = dyn Fn(&RegimeContext<'_>) -> bool + Send + Sync;

/// A dynamic treatment regime `a_t(q) = q(A_{0:t-1}, H_t)`.
///
/// Paths are monotone: once treated, every rule keeps treating.
#[derive(Clone)]
pub enum Regime {
    AlwaysTreat,
    NeverTreat,
    /// Initiate at the given interval (or immediately if already later).
    InitiateAt(usize),
    /// Initiate once the last present outcome exceeds the threshold.
    InitiateWhenOutcomeAbove(f64),
    /// Follow the observed path where it exists, then defer to the inner rule.
    AsObservedThen(Box<Regime>),
    /// Arbitrary user rule.
    Rule(Arc<RuleFn>),
}

impl Regime {
    pub fn decide(&self, ctx: &RegimeContext<'_>) -> bool {
        if ctx.history.a.get(ctx.t - 1).copied().unwrap_or(false) {
            return true;
        }
        match self {
            Regime::AlwaysTreat => true,
            Regime::NeverTreat => false,
            Regime::InitiateAt(t0) => ctx.t >= *t0,
            Regime::InitiateWhenOutcomeAbove(thr) => {
                ctx.history.last_outcome_before(ctx.t).is_some_and(|y| y > *thr)
            }
            Regime::AsObservedThen(rest) => match ctx.observed_a.get(ctx.t) {
                Some(&a) => a,
                None => rest.decide(ctx),
            },
            Regime::Rule(f) => f(ctx),
        }
    }

    /// Treatment path over `1..=horizon` for a history that does not depend
    /// on outcomes (convenience for static regimes).
    pub fn static_path(&self, baseline: &[f64], horizon: usize) -> Vec<bool> {
        let mut a = vec![false];
        let y = vec![None; horizon + 1];
        let m = vec![true; horizon + 1];
        for t in 1..=horizon {
            let ctx = RegimeContext {
                t,
                history: HistoryView { baseline, y: &y[..t], m: &m[..t], a: &a },
                observed_a: &[],
            };
            let next = self.decide(&ctx);
            a.push(next);
        }
        a
    }
}

impl fmt::Debug for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::AlwaysTreat => write!(f, "always"),
            Regime::NeverTreat => write!(f, "never"),
            Regime::InitiateAt(t) => write!(f, "initiate_at:{t}"),
            Regime::InitiateWhenOutcomeAbove(x) => write!(f, "outcome_above:{x}"),
            Regime::AsObservedThen(r) => write!(f, "as_observed_then:{r}"),
            Regime::Rule(_) => write!(f, "custom"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    /// Parses `always`, `never`, `initiate_at:<t>`, `outcome_above:<x>`,
    /// `as_observed` and `as_observed_then:<regime>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || Error::Config(format!("unknown regime {s:?}"));
        Ok(match s {
            "always" | "always_treat" => Regime::AlwaysTreat,
            "never" | "never_treat" => Regime::NeverTreat,
            "as_observed" => Regime::AsObservedThen(Box::new(Regime::NeverTreat)),
            _ => {
                let (head, arg) = s.split_once(':').ok_or_else(bad)?;
                match head {
                    "initiate_at" => Regime::InitiateAt(arg.parse().map_err(|_| bad())?),
                    "outcome_above" => Regime::InitiateWhenOutcomeAbove(arg.parse().map_err(|_| bad())?),
                    "as_observed_then" => Regime::AsObservedThen(Box::new(arg.parse()?)),
                    _ => return Err(bad()),
                }
            }
        })
    }
}
