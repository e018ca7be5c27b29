//! Fixed Bayesian combination rules over a vector of class-1 probabilities.
//!
//! Each rule aggregates the per-model posteriors of both classes and picks
//! the larger aggregate; an aggregate tie goes to class 1. Sums are taken over
//! sorted inputs so every decision is exactly invariant under reordering of
//! the models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{assign_class, PredictionMatrix, Series, Threshold};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Sum,
    Avg,
    Max,
    Maj,
}

impl RuleKind {
    pub const ALL: [RuleKind; 4] = [RuleKind::Sum, RuleKind::Avg, RuleKind::Max, RuleKind::Maj];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Sum => "sum",
            RuleKind::Avg => "avg",
            RuleKind::Max => "max",
            RuleKind::Maj => "maj",
        }
    }

    /// Majority vote needs an odd number of voters.
    pub fn check_arity(self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::domain("rule needs at least one model"));
        }
        if self == RuleKind::Maj && k.is_multiple_of(2) {
            return Err(Error::constraint(format!(
                "majority vote needs an odd number of models, got {k}"
            )));
        }
        Ok(())
    }

    pub fn decide(self, p: &[f64]) -> Result<RuleDecision> {
        match self {
            RuleKind::Sum => sum_rule(p),
            RuleKind::Avg => average_rule(p),
            RuleKind::Max => max_rule(p),
            RuleKind::Maj => majority_vote(p),
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(RuleKind::Sum),
            "avg" | "average" => Ok(RuleKind::Avg),
            "max" => Ok(RuleKind::Max),
            "maj" | "majority" => Ok(RuleKind::Maj),
            other => Err(Error::domain(format!("unknown rule `{other}`"))),
        }
    }
}

/// Decision of one rule on one sample. `label == (score >= 0.5)` always.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleDecision {
    pub label: u8,
    pub score: f64,
}

fn validate(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::domain("rule applied to an empty probability vector"));
    }
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::domain(format!("probability {x} outside [0, 1]")));
    }
    Ok(())
}

/// Sum of the inputs taken in ascending order.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Class-1 and class-0 posterior sums.
fn class_sums(p: &[f64]) -> (f64, f64) {
    let pos = sorted_sum(p.to_vec());
    let neg = sorted_sum(p.iter().map(|x| 1.0 - x).collect());
    (pos, neg)
}

/// Score `a / (a + b)` is at least 0.5 exactly when `a >= b`.
fn ratio_decision(pos: f64, neg: f64) -> RuleDecision {
    let total = pos + neg;
    let score = if total > 0.0 { pos / total } else { 0.5 };
    RuleDecision {
        label: u8::from(pos >= neg),
        score,
    }
}

pub fn sum_rule(p: &[f64]) -> Result<RuleDecision> {
    validate(p)?;
    let (pos, neg) = class_sums(p);
    Ok(ratio_decision(pos, neg))
}

pub fn average_rule(p: &[f64]) -> Result<RuleDecision> {
    validate(p)?;
    let (pos, neg) = class_sums(p);
    let k = p.len() as f64;
    Ok(ratio_decision(pos / k, neg / k))
}

pub fn max_rule(p: &[f64]) -> Result<RuleDecision> {
    validate(p)?;
    let pos = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let neg = p.iter().map(|x| 1.0 - x).fold(f64::NEG_INFINITY, f64::max);
    Ok(ratio_decision(pos, neg))
}

pub fn majority_vote(p: &[f64]) -> Result<RuleDecision> {
    validate(p)?;
    RuleKind::Maj.check_arity(p.len())?;
    let half = Threshold::default();
    let mut ones = 0usize;
    for &x in p {
        ones += usize::from(assign_class(x, half)?);
    }
    Ok(RuleDecision {
        label: u8::from(2 * ones > p.len()),
        score: ones as f64 / p.len() as f64,
    })
}

/// Per-sample output of a rule applied over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleOutput {
    pub scores: Series,
    pub labels: Vec<u8>,
}

/// Applies `rule` to the columns named in `subset`, sample by sample.
pub fn apply_rule(
    rule: RuleKind,
    m: &PredictionMatrix,
    subset: &[impl AsRef<str>],
) -> Result<RuleOutput> {
    rule.check_arity(subset.len())?;
    let cols = m.resolve(subset)?;
    let mut row = Vec::with_capacity(cols.len());
    let mut scores = Vec::with_capacity(m.n_samples());
    let mut labels = Vec::with_capacity(m.n_samples());
    for j in 0..m.n_samples() {
        m.row_into(j, &cols, &mut row);
        let d = rule.decide(&row)?;
        scores.push(d.score);
        labels.push(d.label);
    }
    Ok(RuleOutput {
        scores: Series::from_parts(m.ids().clone(), scores)?,
        labels,
    })
}
