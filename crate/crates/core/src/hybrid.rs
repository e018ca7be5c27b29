//! Base-plus-fallback combiner: trust one base model while it is confident,
//! otherwise let a fixed rule over the auxiliary models decide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    assign_class, check_aligned, label_accuracy, LabelVector, PredictionMatrix, Threshold,
};
use crate::rules::RuleKind;

/// Base/auxiliary choice and fallback rule, without a confidence threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridBase {
    pub base: String,
    pub aux: Vec<String>,
    pub rule: RuleKind,
}

impl HybridBase {
    pub fn new(base: impl Into<String>, aux: Vec<String>, rule: RuleKind) -> Result<Self> {
        let base = base.into();
        if aux.is_empty() {
            return Err(Error::domain(
                "hybrid combiner needs at least one auxiliary model",
            ));
        }
        if aux.contains(&base) {
            return Err(Error::domain(format!(
                "base model `{base}` is also listed as auxiliary"
            )));
        }
        rule.check_arity(aux.len())?;
        Ok(HybridBase { base, aux, rule })
    }

    pub fn with_theta(self, theta: f64) -> Result<HybridConfig> {
        check_theta(theta)?;
        Ok(HybridConfig { spec: self, theta })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    #[serde(flatten)]
    pub spec: HybridBase,
    pub theta: f64,
}

impl HybridConfig {
    pub fn new(
        base: impl Into<String>,
        aux: Vec<String>,
        rule: RuleKind,
        theta: f64,
    ) -> Result<Self> {
        HybridBase::new(base, aux, rule)?.with_theta(theta)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.5 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::constraint(format!("theta {theta} not in (0.5, 1)")))
    }
}

/// `max(p, 1 − p)`.
pub fn confidence(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.max(1.0 - p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Base,
    Aux,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridOutput {
    pub labels: Vec<u8>,
    /// Base probability where the base decided, the rule's score otherwise.
    pub scores: Vec<f64>,
    pub sources: Vec<Source>,
}

impl HybridOutput {
    pub fn fallback_count(&self) -> usize {
        self.sources.iter().filter(|&&s| s == Source::Aux).count()
    }
}

/// Per-sample base confidence plus the precomputed fallback decision.
struct Prepared {
    base: Vec<f64>,
    conf: Vec<f64>,
    aux_label: Vec<u8>,
    aux_score: Vec<f64>,
}

fn prepare(spec: &HybridBase, m: &PredictionMatrix) -> Result<Prepared> {
    let base = m.column(&spec.base)?.to_vec();
    let cols = m.resolve(&spec.aux)?;
    let conf = base
        .iter()
        .map(|&p| confidence(p))
        .collect::<Result<Vec<_>>>()?;
    let mut row = Vec::with_capacity(cols.len());
    let mut aux_label = Vec::with_capacity(base.len());
    let mut aux_score = Vec::with_capacity(base.len());
    for j in 0..m.n_samples() {
        m.row_into(j, &cols, &mut row);
        let d = spec.rule.decide(&row)?;
        aux_label.push(d.label);
        aux_score.push(d.score);
    }
    Ok(Prepared {
        base,
        conf,
        aux_label,
        aux_score,
    })
}

impl Prepared {
    fn at(&self, theta: f64) -> Result<HybridOutput> {
        let half = Threshold::default();
        let n = self.base.len();
        let mut out = HybridOutput {
            labels: Vec::with_capacity(n),
            scores: Vec::with_capacity(n),
            sources: Vec::with_capacity(n),
        };
        for j in 0..n {
            if self.conf[j] >= theta {
                out.labels.push(assign_class(self.base[j], half)?);
                out.scores.push(self.base[j]);
                out.sources.push(Source::Base);
            } else {
                out.labels.push(self.aux_label[j]);
                out.scores.push(self.aux_score[j]);
                out.sources.push(Source::Aux);
            }
        }
        Ok(out)
    }
}

pub fn hybrid_predict(cfg: &HybridConfig, m: &PredictionMatrix) -> Result<HybridOutput> {
    check_theta(cfg.theta)?;
    prepare(&cfg.spec, m)?.at(cfg.theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub accuracy: f64,
    pub fallback_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub best_theta: f64,
    pub best_accuracy: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// TSV with header `theta accuracy fallback_fraction`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("theta\taccuracy\tfallback_fraction\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\n",
                r.theta, r.accuracy, r.fallback_fraction
            ));
        }
        s
    }
}

/// θ ∈ {0.51, 0.52, …, 0.99}.
pub fn default_grid() -> Vec<f64> {
    (51..=99).map(|i| f64::from(i) / 100.0).collect()
}

/// Evaluates the hybrid at every θ in `grid` and keeps the most accurate one.
/// Ties go to the smallest θ.
pub fn theta_sweep(
    spec: &HybridBase,
    m: &PredictionMatrix,
    labels: &LabelVector,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::domain("theta grid is empty"));
    }
    for &theta in grid {
        check_theta(theta)?;
    }
    check_aligned(m.ids(), labels.ids())?;
    let prepared = prepare(spec, m)?;
    let n = m.n_samples() as f64;
    let mut rows = Vec::with_capacity(grid.len());
    for &theta in grid {
        let out = prepared.at(theta)?;
        rows.push(SweepRow {
            theta,
            accuracy: label_accuracy(&out.labels, labels.labels()),
            fallback_fraction: out.fallback_count() as f64 / n,
        });
    }
    let best = rows
        .iter()
        .copied()
        .reduce(|best, r| {
            if r.accuracy > best.accuracy || (r.accuracy == best.accuracy && r.theta < best.theta) {
                r
            } else {
                best
            }
        })
        .expect("grid is non-empty");
    Ok(SweepResult {
        best_theta: best.theta,
        best_accuracy: best.accuracy,
        rows,
    })
}
