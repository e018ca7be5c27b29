//! The `stratum` command line.
//!
//! Exit status: 0 success, 2 invalid input, 3 constraint violation, 4 I/O
//! error. Messages go to standard error; results go to `--out` (written
//! atomically) or standard output.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bound::theorem_bounds;
use crate::error::{Error, Result};
use crate::eval::{cross_validate, report_render, Method, RunPlan};
use crate::hybrid::{default_grid, hybrid_predict, theta_sweep, HybridBase, HybridConfig};
use crate::io;
use crate::model::{accuracy, LabelVector, PredictionMatrix, SampleId, Series, Threshold};
use crate::nn::{self, TrainConfig};
use crate::rules::{apply_rule, RuleKind};
use crate::synth::{generate, SyntheticSpec};
use crate::text::{self, LogisticModel, TextTrainConfig};

#[derive(Parser, Debug)]
#[command(
    name = "stratum",
    version,
    about = "Combine binary classifier probabilities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic classifier suite as prediction and label files.
    Synth(SynthArgs),
    /// Train the non-negative combiner.
    TrainNn(TrainNnArgs),
    /// Combine prediction files into one prediction file.
    Combine(CombineArgs),
    /// Accuracy of prediction files against labels.
    Eval(EvalArgs),
    /// Tune the hybrid confidence threshold on a grid.
    SweepTheta(SweepArgs),
    /// Weight-sum interval of a trained combiner.
    CheckBound(CheckBoundArgs),
    /// Repeated k-fold evaluation.
    Cv(CvArgs),
    /// Train the toy bag-of-words classifier on a corpus.
    TextTrain(TextTrainArgs),
    /// Score a corpus with a toy bag-of-words model.
    TextPredict(TextPredictArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Target accuracy per model, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    acc: Vec<f64>,
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    #[arg(long, default_value_t = 2.0)]
    sharpness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives M1.csv .. MK.csv and labels.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredsArgs {
    /// Prediction file as NAME=PATH or PATH (name = file stem). Repeatable.
    #[arg(long = "preds", required = true)]
    preds: Vec<String>,
}

#[derive(Args, Debug)]
struct NnArgs {
    #[arg(long, default_value_t = 0.039)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl NnArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            l2: self.l2,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct HybridArgs {
    #[arg(long)]
    hybrid_base: Option<String>,
    /// Auxiliary model names, comma separated.
    #[arg(long, value_delimiter = ',')]
    hybrid_aux: Vec<String>,
    /// Fallback rule over the auxiliary models.
    #[arg(long, default_value = "sum")]
    rule: String,
}

impl HybridArgs {
    fn spec(&self) -> Result<HybridBase> {
        let base = self
            .hybrid_base
            .clone()
            .ok_or_else(|| Error::Domain("--hybrid-base is required".into()))?;
        HybridBase::new(base, self.hybrid_aux.clone(), self.rule.parse()?)
    }
}

#[derive(Args, Debug)]
struct TrainNnArgs {
    #[command(flatten)]
    preds: PredsArgs,
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    nn: NnArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CombineArgs {
    /// nn, sum, avg, max, maj or hybrid.
    #[arg(long)]
    method: String,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    hybrid: HybridArgs,
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    preds: PredsArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Individual model prediction files.
    #[arg(long)]
    preds: Vec<String>,
    /// Combined prediction files.
    #[arg(long)]
    combined: Vec<String>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    preds: PredsArgs,
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    hybrid: HybridArgs,
    /// lo:hi:step, inclusive of both ends.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckBoundArgs {
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    preds: PredsArgs,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 30)]
    repeats: usize,
    /// nn, sum, avg, max, maj or hybrid.
    #[arg(long, default_value = "nn")]
    method: String,
    /// Training-pool prediction files (NAME=PATH or PATH).
    #[arg(long, required = true)]
    train_preds: Vec<String>,
    #[arg(long)]
    train_labels: PathBuf,
    /// Test prediction files (NAME=PATH or PATH).
    #[arg(long, required = true)]
    test_preds: Vec<String>,
    #[arg(long)]
    test_labels: PathBuf,
    #[command(flatten)]
    nn: NnArgs,
    #[command(flatten)]
    hybrid: HybridArgs,
    #[arg(long)]
    grid: Option<String>,
    /// Include one row per run.
    #[arg(long)]
    detail: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TextTrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 1000)]
    vocab: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TextPredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the tool on `argv` (including the program name) and returns the exit
/// status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stratum: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::TrainNn(a) => train_nn(a),
        Command::Combine(a) => combine(a),
        Command::Eval(a) => eval(a),
        Command::SweepTheta(a) => sweep_theta(a),
        Command::CheckBound(a) => check_bound(a),
        Command::Cv(a) => cv(a),
        Command::TextTrain(a) => text_train(a),
        Command::TextPredict(a) => text_predict(a),
    }
}

/// `NAME=PATH` or `PATH`; a bare path is named by its file stem.
fn split_pred_arg(arg: &str) -> Result<(String, PathBuf)> {
    if let Some((name, path)) = arg.split_once('=') {
        if name.is_empty() || path.is_empty() {
            return Err(Error::Domain(format!("bad --preds value `{arg}`")));
        }
        return Ok((name.to_string(), PathBuf::from(path)));
    }
    let path = PathBuf::from(arg);
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Domain(format!("cannot name model from `{arg}`")))?
        .to_string();
    Ok((name, path))
}

fn load_preds(args: &[String]) -> Result<PredictionMatrix> {
    let (names, paths): (Vec<String>, Vec<PathBuf>) = args
        .iter()
        .map(|a| split_pred_arg(a))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    io::load_matrix(&paths, &names)
}

/// Parses `lo:hi:step` into an inclusive grid, rounded to 12 decimals.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Domain(format!("grid `{spec}` is not lo:hi:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::atomic_write(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        balance: a.balance,
        sharpness: a.sharpness,
        ..SyntheticSpec::new(a.acc, a.rho, a.n, a.seed)?
    };
    spec.validate()?;
    let (labels, m) = generate(&spec)?;
    write_suite(&a.out, &labels, &m)
}

fn train_nn(a: TrainNnArgs) -> Result<()> {
    let m = load_preds(&a.preds.preds)?;
    let labels = io::read_label_file(&a.labels)?;
    let cfg = a.nn.config();
    let outcome = nn::train(&m, &labels, &cfg)?;
    if outcome.degenerate_labels {
        eprintln!("stratum: warning: training labels are all one class");
    }
    io::save_weights(
        &a.out,
        &io::SavedWeights {
            weights: outcome.weights,
            train_config: Some(outcome.config),
            clipped_any: outcome.clipped_any,
        },
    )
}

fn rule_or_none(method: &str) -> Option<RuleKind> {
    method.parse().ok()
}

fn combine(a: CombineArgs) -> Result<()> {
    let m = load_preds(&a.preds.preds)?;
    let scores = match a.method.as_str() {
        "nn" => {
            let path = a
                .weights
                .as_ref()
                .ok_or_else(|| Error::Domain("--weights is required for nn".into()))?;
            nn::predict(&io::load_weights(path)?.weights, &m)?
        }
        "hybrid" => {
            let theta = a
                .theta
                .ok_or_else(|| Error::Domain("--theta is required for hybrid".into()))?;
            let cfg = HybridConfig {
                spec: a.hybrid.spec()?,
                theta,
            };
            let out = hybrid_predict(&cfg, &m)?;
            Series::from_parts(m.ids().clone(), out.scores)?
        }
        other => match rule_or_none(other) {
            Some(rule) => apply_rule(rule, &m, m.model_names())?.scores,
            None => return Err(Error::Domain(format!("unknown method `{other}`"))),
        },
    };
    io::write_prediction_file(&a.out, &scores)
}

fn eval(a: EvalArgs) -> Result<()> {
    if a.preds.is_empty() && a.combined.is_empty() {
        return Err(Error::Domain("give --preds or --combined".into()));
    }
    let labels = io::read_label_file(&a.labels)?;
    let t = Threshold::new(a.t)?;
    let mut s = String::from("name\tkind\taccuracy\n");
    for (kind, args) in [("model", &a.preds), ("combined", &a.combined)] {
        for arg in args {
            let (name, path) = split_pred_arg(arg)?;
            let series = io::read_prediction_file(&path)?;
            let acc = accuracy(&series, &labels, t)?;
            s.push_str(&format!("{name}\t{kind}\t{acc}\n"));
        }
    }
    emit(a.out.as_deref(), &s)
}

fn grid_or_default(grid: Option<&str>) -> Result<Vec<f64>> {
    grid.map_or_else(|| Ok(default_grid()), parse_grid)
}

fn sweep_theta(a: SweepArgs) -> Result<()> {
    let m = load_preds(&a.preds.preds)?;
    let labels = io::read_label_file(&a.labels)?;
    let grid = grid_or_default(a.grid.as_deref())?;
    let res = theta_sweep(&a.hybrid.spec()?, &m, &labels, &grid)?;
    eprintln!(
        "stratum: best theta {} accuracy {}",
        res.best_theta, res.best_accuracy
    );
    emit(a.out.as_deref(), &res.to_tsv())
}

fn check_bound(a: CheckBoundArgs) -> Result<()> {
    let weights = io::load_weights(&a.weights)?.weights;
    let m = load_preds(&a.preds.preds)?;
    let labels = io::read_label_file(&a.labels)?;
    let r = theorem_bounds(&weights, &m, &labels)?;
    let s = format!(
        "W\tlower\tupper\tnorm_u\terr_y\terr_yhat\tcontained\tdegenerate\n{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        r.weight_sum, r.lower, r.upper, r.norm_u, r.err_y, r.err_yhat, r.contained, r.degenerate
    );
    emit(a.out.as_deref(), &s)
}

fn cv(a: CvArgs) -> Result<()> {
    let plan = RunPlan {
        n_folds: a.folds,
        repeats_per_fold: a.repeats,
        seed: a.nn.seed,
    };
    let method = match a.method.as_str() {
        "nn" => Method::Nn(a.nn.config()),
        "hybrid" => Method::Hybrid {
            spec: a.hybrid.spec()?,
            grid: grid_or_default(a.grid.as_deref())?,
        },
        other => Method::Rule(
            rule_or_none(other)
                .ok_or_else(|| Error::Domain(format!("unknown method `{other}`")))?,
        ),
    };
    let train_preds = load_preds(&a.train_preds)?;
    let train_labels = io::read_label_file(&a.train_labels)?;
    let test_preds = load_preds(&a.test_preds)?;
    let test_labels = io::read_label_file(&a.test_labels)?;
    let report = cross_validate(
        &plan,
        &train_preds,
        &train_labels,
        &test_preds,
        &test_labels,
        &method,
    )?;
    let sizes: Vec<String> = report.fold_sizes.iter().map(usize::to_string).collect();
    eprintln!("stratum: fold sizes {}", sizes.join(","));
    if let Some(rate) = report.containment_rate() {
        eprintln!(
            "stratum: weight sum inside interval in {:.2}% of runs",
            rate * 100.0
        );
    }
    emit(a.out.as_deref(), &report_render(&report, a.detail))
}

fn text_train(a: TextTrainArgs) -> Result<()> {
    let docs = io::read_corpus(&a.corpus)?;
    let labels = io::corpus_labels(&io::read_label_file(&a.labels)?, docs.len())?;
    let cfg = TextTrainConfig {
        vocab_size: a.vocab,
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch,
        l2: a.l2,
        seed: a.seed,
    };
    let model = text::train_logistic(&docs, &labels, &cfg)?;
    io::save_json(&a.out, &model)
}

fn text_predict(a: TextPredictArgs) -> Result<()> {
    let model: LogisticModel = io::load_json(&a.model)?;
    let docs = io::read_corpus(&a.corpus)?;
    let pairs = docs
        .iter()
        .enumerate()
        .map(|(i, d)| Ok((SampleId::new(i.to_string())?, model.predict_proba(d))))
        .collect::<Result<Vec<_>>>()?;
    io::write_prediction_file(&a.out, &Series::new(pairs)?)
}

/// Writes one `<model>.csv` per column of `m` and `labels.csv` into `dir`.
pub fn write_suite(dir: &Path, labels: &LabelVector, m: &PredictionMatrix) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for name in m.model_names() {
        io::write_prediction_file(&dir.join(format!("{name}.csv")), &m.column_series(name)?)?;
    }
    io::write_label_file(&dir.join("labels.csv"), labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = parse_grid("0.51:0.99:0.01").unwrap();
        assert_eq!(g.len(), 49);
        assert_eq!(g[0], 0.51);
        assert_eq!(g[48], 0.99);
        assert_eq!(g, default_grid());
        assert_eq!(parse_grid("0.6:0.6:0.1").unwrap(), vec![0.6]);
        for bad in ["0.5:0.9", "a:b:c", "0.9:0.5:0.1", "0.5:0.9:0"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn pred_argument_forms() {
        assert_eq!(
            split_pred_arg("A=x/y.csv").unwrap(),
            ("A".to_string(), PathBuf::from("x/y.csv"))
        );
        assert_eq!(split_pred_arg("x/M3.csv").unwrap().0, "M3");
        assert!(split_pred_arg("=x.csv").is_err());
    }

    #[test]
    fn usage_errors_exit_2_and_help_exits_0() {
        assert_eq!(run(["stratum", "--help"]), 0);
        assert_eq!(run(["stratum", "bogus"]), 2);
        assert_eq!(run(["stratum", "cv", "--folds", "x"]), 2);
    }
}
