//! Repeated k-fold evaluation of combiners.
//!
//! The training pool is split into folds. Each fold's rows (the held-out
//! predictions of the individual models) are used on their own to fit a
//! combiner, which is then scored on the full test set. Trained combiners are
//! refit `repeats_per_fold` times per fold with distinct seeds; fixed rules
//! are evaluated once per fold.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{theorem_bounds, weight_sum, BoundReport};
use crate::error::{Error, Result};
use crate::hybrid::{hybrid_predict, theta_sweep, HybridBase};
use crate::model::{
    accuracy, check_aligned, label_accuracy, LabelVector, PredictionMatrix, SampleId, Threshold,
};
use crate::nn::{predict, train, CombinerWeights, TrainConfig};
use crate::rules::{apply_rule, RuleKind};

/// Disjoint folds covering the input ids; sizes differ by at most one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub folds: Vec<Vec<SampleId>>,
}

/// Seeded shuffle of the sorted ids, then a contiguous partition. The first
/// `len % n_folds` folds get one extra id. Ids inside a fold are sorted.
pub fn kfold_split(ids: &[SampleId], n_folds: usize, seed: u64) -> Result<FoldSplit> {
    if n_folds < 2 {
        return Err(Error::domain(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    let mut order = ids.to_vec();
    order.sort();
    if let Some(w) = order.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::domain(format!("duplicate sample id `{}`", w[0])));
    }
    if order.len() < n_folds {
        return Err(Error::domain(format!(
            "{} samples cannot fill {n_folds} folds",
            order.len()
        )));
    }
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = order.len() / n_folds;
    let extra = order.len() % n_folds;
    let mut folds = Vec::with_capacity(n_folds);
    let mut start = 0;
    for f in 0..n_folds {
        let size = base + usize::from(f < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort();
        folds.push(fold);
        start += size;
    }
    Ok(FoldSplit { folds })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub n_folds: usize,
    pub repeats_per_fold: usize,
    pub seed: u64,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            n_folds: 5,
            repeats_per_fold: 30,
            seed: 0,
        }
    }
}

impl RunPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::domain("need at least 2 folds"));
        }
        if self.repeats_per_fold == 0 {
            return Err(Error::domain("need at least one repeat per fold"));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one training run:
/// `splitmix64(splitmix64(splitmix64(seed) ^ fold) ^ repeat)`.
pub fn run_seed(seed: u64, fold: usize, repeat: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ fold as u64) ^ repeat as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Nn(TrainConfig),
    Rule(RuleKind),
    Hybrid { spec: HybridBase, grid: Vec<f64> },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Nn(_) => "nn".into(),
            Method::Rule(r) => r.to_string(),
            Method::Hybrid { spec, .. } => format!("hybrid:{}", spec.rule),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunDetail {
    Nn {
        weights: CombinerWeights,
        clipped_any: bool,
        min_weight_seen: f64,
        /// Weight-sum interval on the fold the combiner was trained on.
        bound: Option<BoundReport>,
    },
    Rule,
    Hybrid {
        theta: f64,
        fallback_fraction: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub fold: usize,
    pub repeat: usize,
    pub accuracy: f64,
    pub detail: RunDetail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub plan: RunPlan,
    pub fold_sizes: Vec<usize>,
    pub records: Vec<RunRecord>,
    pub mean: f64,
    pub stdev: f64,
}

/// Arithmetic mean and sample (n − 1) standard deviation; stdev is 0 for a
/// single value.
pub fn mean_stdev(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::domain("mean of an empty list"));
    }
    // identical values are returned exactly rather than through a rounded sum
    if values.iter().all(|&v| v == values[0]) {
        return Ok((values[0], 0.0));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

fn same_models(a: &PredictionMatrix, b: &PredictionMatrix) -> Result<()> {
    let x: BTreeSet<&String> = a.model_names().iter().collect();
    let y: BTreeSet<&String> = b.model_names().iter().collect();
    if x != y {
        return Err(Error::domain(format!(
            "train models {:?} differ from test models {:?}",
            a.model_names(),
            b.model_names()
        )));
    }
    Ok(())
}

struct Fold {
    preds: PredictionMatrix,
    labels: LabelVector,
}

fn nn_run(
    cfg: &TrainConfig,
    fold: &Fold,
    test_preds: &PredictionMatrix,
    test_labels: &LabelVector,
) -> Result<(f64, RunDetail)> {
    let outcome = train(&fold.preds, &fold.labels, cfg)?;
    let pred = predict(&outcome.weights, test_preds)?;
    let acc = accuracy(&pred, test_labels, outcome.weights.threshold())?;
    let bound = if weight_sum(&outcome.weights) > 0.0 {
        Some(theorem_bounds(&outcome.weights, &fold.preds, &fold.labels)?)
    } else {
        None
    };
    Ok((
        acc,
        RunDetail::Nn {
            weights: outcome.weights,
            clipped_any: outcome.clipped_any,
            min_weight_seen: outcome.min_weight_seen,
            bound,
        },
    ))
}

/// Runs `method` under `plan`.
///
/// Runs execute in parallel; every run's seed is a pure function of
/// `(plan.seed, fold, repeat)`, so the report does not depend on scheduling.
pub fn cross_validate(
    plan: &RunPlan,
    train_preds: &PredictionMatrix,
    train_labels: &LabelVector,
    test_preds: &PredictionMatrix,
    test_labels: &LabelVector,
    method: &Method,
) -> Result<EvalReport> {
    plan.validate()?;
    same_models(train_preds, test_preds)?;
    check_aligned(train_preds.ids(), train_labels.ids())?;
    check_aligned(test_preds.ids(), test_labels.ids())?;

    let split = kfold_split(train_preds.ids(), plan.n_folds, plan.seed)?;
    let folds = split
        .folds
        .iter()
        .map(|ids| {
            Ok(Fold {
                preds: train_preds.select_rows(ids)?,
                labels: train_labels.select(ids)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let records: Vec<RunRecord> = match method {
        Method::Nn(cfg) => {
            let jobs: Vec<(usize, usize)> = (0..plan.n_folds)
                .flat_map(|f| (0..plan.repeats_per_fold).map(move |r| (f, r)))
                .collect();
            jobs.par_iter()
                .map(|&(f, r)| {
                    let cfg = TrainConfig {
                        seed: run_seed(plan.seed, f, r),
                        ..cfg.clone()
                    };
                    let (acc, detail) = nn_run(&cfg, &folds[f], test_preds, test_labels)?;
                    Ok(RunRecord {
                        fold: f,
                        repeat: r,
                        accuracy: acc,
                        detail,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Method::Rule(rule) => {
            // nothing is fitted, so every fold sees the same test accuracy
            let out = apply_rule(*rule, test_preds, train_preds.model_names())?;
            let acc = label_accuracy(&out.labels, test_labels.labels());
            (0..plan.n_folds)
                .map(|f| RunRecord {
                    fold: f,
                    repeat: 0,
                    accuracy: acc,
                    detail: RunDetail::Rule,
                })
                .collect()
        }
        Method::Hybrid { spec, grid } => folds
            .par_iter()
            .enumerate()
            .map(|(f, fold)| {
                let sweep = theta_sweep(spec, &fold.preds, &fold.labels, grid)?;
                let cfg = spec.clone().with_theta(sweep.best_theta)?;
                let out = hybrid_predict(&cfg, test_preds)?;
                Ok(RunRecord {
                    fold: f,
                    repeat: 0,
                    accuracy: label_accuracy(&out.labels, test_labels.labels()),
                    detail: RunDetail::Hybrid {
                        theta: sweep.best_theta,
                        fallback_fraction: out.fallback_count() as f64
                            / test_preds.n_samples() as f64,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let accs: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let (mean, stdev) = mean_stdev(&accs)?;
    Ok(EvalReport {
        method: method.name(),
        plan: *plan,
        fold_sizes: split.folds.iter().map(Vec::len).collect(),
        records,
        mean,
        stdev,
    })
}

/// Accuracy of each individual model on `(m, labels)` at threshold 0.5.
pub fn individual_accuracies(
    m: &PredictionMatrix,
    labels: &LabelVector,
) -> Result<Vec<(String, f64)>> {
    m.model_names()
        .iter()
        .map(|name| {
            let acc = accuracy(&m.column_series(name)?, labels, Threshold::default())?;
            Ok((name.clone(), acc))
        })
        .collect()
}

const SUMMARY_HEADER: &str = "method\truns\tmean\tstdev\tmean_pct\tstdev_pct";
const RUN_HEADER: &str =
    "fold\trepeat\taccuracy\tW\tlower\tupper\tcontained\tclipped\ttheta\tfallback_fraction";

/// Summary row of a rendered report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    pub method: String,
    pub runs: usize,
    pub mean: f64,
    pub stdev: f64,
}

/// One per-run row of a rendered report; `None` for cells that do not apply.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub fold: usize,
    pub repeat: usize,
    pub accuracy: f64,
    pub weight_sum: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub contained: Option<bool>,
    pub clipped: Option<bool>,
    pub theta: Option<f64>,
    pub fallback_fraction: Option<f64>,
}

impl EvalReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            method: self.method.clone(),
            runs: self.records.len(),
            mean: self.mean,
            stdev: self.stdev,
        }
    }

    pub fn run_rows(&self) -> Vec<RunRow> {
        self.records
            .iter()
            .map(|r| {
                let mut row = RunRow {
                    fold: r.fold,
                    repeat: r.repeat,
                    accuracy: r.accuracy,
                    weight_sum: None,
                    lower: None,
                    upper: None,
                    contained: None,
                    clipped: None,
                    theta: None,
                    fallback_fraction: None,
                };
                match &r.detail {
                    RunDetail::Nn {
                        weights,
                        clipped_any,
                        bound,
                        ..
                    } => {
                        row.weight_sum = Some(weight_sum(weights));
                        row.clipped = Some(*clipped_any);
                        if let Some(b) = bound {
                            row.lower = Some(b.lower);
                            row.upper = Some(b.upper);
                            row.contained = Some(b.contained);
                        }
                    }
                    RunDetail::Rule => {}
                    RunDetail::Hybrid {
                        theta,
                        fallback_fraction,
                    } => {
                        row.theta = Some(*theta);
                        row.fallback_fraction = Some(*fallback_fraction);
                    }
                }
                row
            })
            .collect()
    }

    /// Fraction of trained runs whose weight sum lies inside its interval.
    pub fn containment_rate(&self) -> Option<f64> {
        let flags: Vec<bool> = self
            .records
            .iter()
            .filter_map(|r| match &r.detail {
                RunDetail::Nn { bound: Some(b), .. } => Some(b.contained),
                _ => None,
            })
            .collect();
        (!flags.is_empty())
            .then(|| flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64)
    }
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Renders the report as TSV: a summary table, then (with `detail`) a blank
/// line and one row per run.
pub fn report_render(report: &EvalReport, detail: bool) -> String {
    let mut s = String::new();
    writeln!(s, "{SUMMARY_HEADER}").unwrap();
    writeln!(
        s,
        "{}\t{}\t{}\t{}\t{:.2}\t{:.2}",
        report.method,
        report.records.len(),
        report.mean,
        report.stdev,
        report.mean * 100.0,
        report.stdev * 100.0
    )
    .unwrap();
    if detail {
        writeln!(s).unwrap();
        writeln!(s, "{RUN_HEADER}").unwrap();
        for r in report.run_rows() {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.fold,
                r.repeat,
                r.accuracy,
                cell(r.weight_sum),
                cell(r.lower),
                cell(r.upper),
                cell(r.contained),
                cell(r.clipped),
                cell(r.theta),
                cell(r.fallback_fraction)
            )
            .unwrap();
        }
    }
    s
}

fn parse_field<T: std::str::FromStr>(v: &str, what: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Schema(format!("bad {what} value `{v}`")))
}

fn parse_opt<T: std::str::FromStr>(v: &str, what: &str) -> Result<Option<T>> {
    if v == "-" {
        Ok(None)
    } else {
        parse_field(v, what).map(Some)
    }
}

/// Parses text produced by [`report_render`].
pub fn parse_report(text: &str) -> Result<(ReportSummary, Vec<RunRow>)> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(Error::Schema("missing report summary header".into()));
    }
    let row = lines
        .next()
        .ok_or_else(|| Error::Schema("missing report summary row".into()))?;
    let f: Vec<&str> = row.split('\t').collect();
    if f.len() != 6 {
        return Err(Error::Schema(format!("summary row has {} fields", f.len())));
    }
    let summary = ReportSummary {
        method: f[0].to_string(),
        runs: parse_field(f[1], "runs")?,
        mean: parse_field(f[2], "mean")?,
        stdev: parse_field(f[3], "stdev")?,
    };
    let mut runs = Vec::new();
    match lines.next() {
        None => return Ok((summary, runs)),
        Some("") => {}
        Some(other) => return Err(Error::Schema(format!("unexpected line `{other}`"))),
    }
    if lines.next() != Some(RUN_HEADER) {
        return Err(Error::Schema("missing per-run header".into()));
    }
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(Error::Schema(format!("run row has {} fields", f.len())));
        }
        runs.push(RunRow {
            fold: parse_field(f[0], "fold")?,
            repeat: parse_field(f[1], "repeat")?,
            accuracy: parse_field(f[2], "accuracy")?,
            weight_sum: parse_opt(f[3], "W")?,
            lower: parse_opt(f[4], "lower")?,
            upper: parse_opt(f[5], "upper")?,
            contained: parse_opt(f[6], "contained")?,
            clipped: parse_opt(f[7], "clipped")?,
            theta: parse_opt(f[8], "theta")?,
            fallback_fraction: parse_opt(f[9], "fallback_fraction")?,
        });
    }
    Ok((summary, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sequential_ids;

    #[test]
    fn fold_sizes() {
        let ids = sequential_ids(10);
        let split = kfold_split(&ids, 3, 1).unwrap();
        let sizes: Vec<usize> = split.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let ids = sequential_ids(25_000);
        let split = kfold_split(&ids, 5, 7).unwrap();
        assert!(split.folds.iter().all(|f| f.len() == 5_000));
        let mut all: Vec<SampleId> = split.folds.concat();
        all.sort();
        assert_eq!(&all[..], &ids[..]);
    }

    #[test]
    fn fold_determinism_and_errors() {
        let ids = sequential_ids(50);
        assert_eq!(
            kfold_split(&ids, 5, 3).unwrap(),
            kfold_split(&ids, 5, 3).unwrap()
        );
        assert_ne!(
            kfold_split(&ids, 5, 3).unwrap(),
            kfold_split(&ids, 5, 4).unwrap()
        );
        // input order does not matter
        let mut rev = ids.to_vec();
        rev.reverse();
        assert_eq!(
            kfold_split(&rev, 5, 3).unwrap(),
            kfold_split(&ids, 5, 3).unwrap()
        );
        assert!(kfold_split(&ids[..3], 5, 0).is_err());
        assert!(kfold_split(&ids, 1, 0).is_err());
    }

    #[test]
    fn mean_stdev_examples() {
        assert_eq!(mean_stdev(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        let (m, s) = mean_stdev(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_stdev(&[0.42]).unwrap(), (0.42, 0.0));
        assert!(mean_stdev(&[]).is_err());
    }

    #[test]
    fn run_seeds_are_distinct() {
        let mut seen = BTreeSet::new();
        for f in 0..5 {
            for r in 0..30 {
                assert!(seen.insert(run_seed(9, f, r)));
            }
        }
        assert_eq!(run_seed(9, 2, 3), run_seed(9, 2, 3));
    }

    fn report(mean: f64) -> EvalReport {
        EvalReport {
            method: "sum".into(),
            plan: RunPlan::default(),
            fold_sizes: vec![2, 2],
            records: vec![
                RunRecord {
                    fold: 0,
                    repeat: 0,
                    accuracy: mean,
                    detail: RunDetail::Rule,
                },
                RunRecord {
                    fold: 1,
                    repeat: 0,
                    accuracy: mean,
                    detail: RunDetail::Hybrid {
                        theta: 0.91,
                        fallback_fraction: 0.125,
                    },
                },
            ],
            mean,
            stdev: 0.0,
        }
    }

    #[test]
    fn render_summary_only() {
        let text = report_render(&report(0.9387), false);
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("\t93.87\t"));
    }

    #[test]
    fn render_parse_round_trip() {
        let r = report(0.938_712_345_678_9);
        let (summary, runs) = parse_report(&report_render(&r, true)).unwrap();
        assert_eq!(summary, r.summary());
        assert_eq!(runs, r.run_rows());
        assert_eq!(runs[1].theta, Some(0.91));
        assert!(parse_report("nonsense").is_err());
    }
}
