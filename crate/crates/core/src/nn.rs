//! Neural-network combiner: one dense layer with non-negative weights, a
//! trainable shift and a sigmoid.
//!
//! The combined score of a sample is `Σ w_i p_i` and its probability is
//! `σ(score - b)`. Training minimizes mean binary cross-entropy plus
//! `l2 · Σ w_i²` with minibatch Adam; after every step negative weights are
//! projected back to zero.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_aligned, logistic, LabelVector, PredictionMatrix, Series, Threshold};
use crate::optim::Adam;

/// Probabilities are kept this far from 0 and 1 inside the logarithm.
const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CombinerWeights {
    model_names: Vec<String>,
    w: Vec<f64>,
    b: f64,
    t: Threshold,
}

impl CombinerWeights {
    pub fn new(model_names: Vec<String>, w: Vec<f64>, b: f64, t: Threshold) -> Result<Self> {
        if model_names.is_empty() {
            return Err(Error::domain("combiner needs at least one model"));
        }
        if model_names.len() != w.len() {
            return Err(Error::domain(format!(
                "{} model names but {} weights",
                model_names.len(),
                w.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = model_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::domain(format!("duplicate model name `{dup}`")));
        }
        if !b.is_finite() {
            return Err(Error::domain("shift b must be finite"));
        }
        for (name, &wi) in model_names.iter().zip(&w) {
            if !wi.is_finite() {
                return Err(Error::domain(format!("weight of `{name}` is not finite")));
            }
            if wi < 0.0 {
                return Err(Error::constraint(format!(
                    "weight of `{name}` is negative ({wi})"
                )));
            }
        }
        Ok(CombinerWeights {
            model_names,
            w,
            b,
            t,
        })
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn shift(&self) -> f64 {
        self.b
    }

    pub fn threshold(&self) -> Threshold {
        self.t
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    /// Same weights with every `w_i` and `b` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        CombinerWeights::new(
            self.model_names.clone(),
            self.w.iter().map(|w| w * factor).collect(),
            self.b * factor,
            self.t,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 32,
            l2: 0.039,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::domain("l2 weight must be non-negative"));
        }
        Ok(())
    }
}

/// Trained weights plus what happened along the way.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub weights: CombinerWeights,
    pub config: TrainConfig,
    /// Some weight went negative after an optimizer step and was reset to 0.
    pub clipped_any: bool,
    pub clip_events: usize,
    /// Smallest weight observed after any projection step.
    pub min_weight_seen: f64,
    /// Every training label had the same class.
    pub degenerate_labels: bool,
    pub final_loss: f64,
}

fn check_len(weights: &CombinerWeights, p: &[f64]) -> Result<()> {
    if p.len() != weights.k() {
        return Err(Error::domain(format!(
            "expected {} probabilities, got {}",
            weights.k(),
            p.len()
        )));
    }
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::domain(format!("probability {x} outside [0, 1]")));
    }
    Ok(())
}

#[inline]
fn dot(w: &[f64], p: &[f64]) -> f64 {
    w.iter().zip(p).map(|(a, b)| a * b).sum()
}

/// `Σ w_i p_i`.
pub fn raw_score(weights: &CombinerWeights, p: &[f64]) -> Result<f64> {
    check_len(weights, p)?;
    Ok(dot(&weights.w, p))
}

/// `σ(Σ w_i p_i − b)`.
pub fn forward(weights: &CombinerWeights, p: &[f64]) -> Result<f64> {
    Ok(logistic(raw_score(weights, p)? - weights.b))
}

/// Row-major copy of the columns a combiner uses.
struct Design {
    k: usize,
    rows: Vec<f64>,
}

impl Design {
    fn new(weights_names: &[String], m: &PredictionMatrix) -> Result<Self> {
        let cols = m.resolve(weights_names)?;
        let mut rows = Vec::with_capacity(cols.len() * m.n_samples());
        let mut buf = Vec::with_capacity(cols.len());
        for j in 0..m.n_samples() {
            m.row_into(j, &cols, &mut buf);
            rows.extend_from_slice(&buf);
        }
        Ok(Design {
            k: cols.len(),
            rows,
        })
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.k..(j + 1) * self.k]
    }

    fn n(&self) -> usize {
        self.rows.len() / self.k
    }
}

fn bce(f: f64, u: u8) -> f64 {
    if u == 1 {
        -f.clamp(LOG_EPS, 1.0 - LOG_EPS).ln()
    } else {
        -(1.0 - f).clamp(LOG_EPS, 1.0 - LOG_EPS).ln()
    }
}

/// `params = [w_1 .. w_K, b]`; mean BCE over `rows` plus the L2 term on w.
fn loss_at(
    params: &[f64],
    x: &Design,
    u: &[u8],
    rows: impl Iterator<Item = usize>,
    l2: f64,
) -> f64 {
    let (w, b) = params.split_at(x.k);
    let mut total = 0.0;
    let mut n = 0usize;
    for j in rows {
        total += bce(logistic(dot(w, x.row(j)) - b[0]), u[j]);
        n += 1;
    }
    total / n as f64 + l2 * w.iter().map(|v| v * v).sum::<f64>()
}

fn grad_at(params: &[f64], x: &Design, u: &[u8], rows: &[usize], l2: f64, out: &mut [f64]) {
    let k = x.k;
    let (w, b) = params.split_at(k);
    out.iter_mut().for_each(|g| *g = 0.0);
    for &j in rows {
        let p = x.row(j);
        let r = logistic(dot(w, p) - b[0]) - f64::from(u[j]);
        for i in 0..k {
            out[i] += r * p[i];
        }
        out[k] -= r;
    }
    let n = rows.len() as f64;
    for i in 0..k {
        out[i] = out[i] / n + 2.0 * l2 * w[i];
    }
    out[k] /= n;
}

fn params_of(weights: &CombinerWeights) -> Vec<f64> {
    let mut params = weights.w.clone();
    params.push(weights.b);
    params
}

/// Mean binary cross-entropy of the combiner on `(m, labels)` plus `l2 · Σ w_i²`.
pub fn loss(
    weights: &CombinerWeights,
    m: &PredictionMatrix,
    labels: &LabelVector,
    l2: f64,
) -> Result<f64> {
    check_aligned(m.ids(), labels.ids())?;
    let x = Design::new(&weights.model_names, m)?;
    Ok(loss_at(
        &params_of(weights),
        &x,
        labels.labels(),
        0..x.n(),
        l2,
    ))
}

/// Gradient of [`loss`]: `[∂/∂w_1, …, ∂/∂w_K, ∂/∂b]`.
pub fn gradient(
    weights: &CombinerWeights,
    m: &PredictionMatrix,
    labels: &LabelVector,
    l2: f64,
) -> Result<Vec<f64>> {
    check_aligned(m.ids(), labels.ids())?;
    let x = Design::new(&weights.model_names, m)?;
    let rows: Vec<usize> = (0..x.n()).collect();
    let mut g = vec![0.0; weights.k() + 1];
    grad_at(&params_of(weights), &x, labels.labels(), &rows, l2, &mut g);
    Ok(g)
}

/// Combined probability for every sample of `m`. Columns are matched by name.
pub fn predict(weights: &CombinerWeights, m: &PredictionMatrix) -> Result<Series> {
    let x = Design::new(&weights.model_names, m)?;
    let values = (0..x.n())
        .map(|j| logistic(dot(&weights.w, x.row(j)) - weights.b))
        .collect();
    Series::from_parts(m.ids().clone(), values)
}

/// Trains a combiner over every column of `m`.
///
/// Weights start at `1/K`, the shift at `0.5`. Samples are visited in
/// canonical id order, reshuffled each epoch by a ChaCha8 generator seeded
/// with `cfg.seed`, so the result depends only on the data and the config.
pub fn train(
    m: &PredictionMatrix,
    labels: &LabelVector,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_aligned(m.ids(), labels.ids())?;
    let k = m.n_models();
    let n = m.n_samples();
    if n < k + 1 {
        return Err(Error::domain(format!(
            "training needs at least {} samples for {k} models, got {n}",
            k + 1
        )));
    }
    let names = m.model_names().to_vec();
    let x = Design::new(&names, m)?;
    let u = labels.labels();
    let positives = labels.count_positive();
    let degenerate_labels = positives == 0 || positives == n;

    let mut params = vec![1.0 / k as f64; k];
    params.push(0.5);
    let mut opt = Adam::new(k + 1, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; k + 1];
    let mut clip_events = 0usize;
    let mut min_weight_seen = f64::INFINITY;

    for _ in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            grad_at(&params, &x, u, batch, cfg.l2, &mut grad);
            opt.step(&mut params, &grad);
            for w in &mut params[..k] {
                if *w < 0.0 {
                    *w = 0.0;
                    clip_events += 1;
                }
                min_weight_seen = min_weight_seen.min(*w);
            }
        }
    }

    let final_loss = loss_at(&params, &x, u, 0..n, cfg.l2);
    let b = params.pop().unwrap_or_default();
    let weights = CombinerWeights::new(names, params, b, Threshold::default())?;
    Ok(TrainOutcome {
        weights,
        config: cfg.clone(),
        clipped_any: clip_events > 0,
        clip_events,
        min_weight_seen,
        degenerate_labels,
        final_loss,
    })
}
