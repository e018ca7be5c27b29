//! Toy multi-hot bag-of-words logistic classifier.
//!
//! Exists so raw text can be turned into a prediction file and fed to the
//! combiners end to end. It is intentionally small: lowercase alphanumeric
//! tokens, presence features, one logistic unit.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::logistic;
use crate::optim::Adam;

const LOG_EPS: f64 = 1e-12;

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(doc: &str) -> Vec<String> {
    doc.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::domain("vocabulary must not be empty"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;
    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// The `size` most frequent tokens; equal counts are ordered lexicographically.
pub fn build_vocab(corpus: &[impl AsRef<str>], size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::domain("empty corpus"));
    }
    if size == 0 {
        return Err(Error::domain("vocabulary size must be positive"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        for t in tokenize(doc.as_ref()) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(size);
    Vocabulary::new(ranked.into_iter().map(|(t, _)| t).collect())
}

/// Presence indicator per vocabulary token.
pub fn encode(doc: &str, vocab: &Vocabulary) -> Vec<f64> {
    let mut x = vec![0.0; vocab.len()];
    for t in tokenize(doc) {
        if let Some(&i) = vocab.index.get(&t) {
            x[i] = 1.0;
        }
    }
    x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub vocab: Vocabulary,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(vocab: Vocabulary) -> Self {
        let weights = vec![0.0; vocab.len()];
        LogisticModel {
            vocab,
            weights,
            bias: 0.0,
        }
    }

    pub fn predict_proba(&self, doc: &str) -> f64 {
        let x = encode(doc, &self.vocab);
        logistic(dot(&self.weights, &x) + self.bias)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextTrainConfig {
    pub vocab_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TextTrainConfig {
    fn default() -> Self {
        TextTrainConfig {
            vocab_size: 1000,
            epochs: 100,
            learning_rate: 0.05,
            batch_size: 32,
            l2: 0.0,
            seed: 0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean cross-entropy plus `l2 · Σ w²` at `params = [w_1 .. w_V, bias]`, and
/// its gradient, over the rows listed in `rows`.
pub fn loss_and_gradient(
    params: &[f64],
    features: &[Vec<f64>],
    labels: &[u8],
    rows: &[usize],
    l2: f64,
) -> (f64, Vec<f64>) {
    let v = params.len() - 1;
    let (w, b) = params.split_at(v);
    let mut grad = vec![0.0; v + 1];
    let mut loss = 0.0;
    for &j in rows {
        let x = &features[j];
        let f = logistic(dot(w, x) + b[0]);
        let u = f64::from(labels[j]);
        loss -= u * f.clamp(LOG_EPS, 1.0 - LOG_EPS).ln()
            + (1.0 - u) * (1.0 - f).clamp(LOG_EPS, 1.0 - LOG_EPS).ln();
        let r = f - u;
        for (g, xi) in grad[..v].iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[v] += r;
    }
    let n = rows.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    for (g, wi) in grad[..v].iter_mut().zip(w) {
        *g += 2.0 * l2 * wi;
    }
    (loss / n + l2 * dot(w, w), grad)
}

pub fn train_logistic(
    docs: &[impl AsRef<str>],
    labels: &[u8],
    cfg: &TextTrainConfig,
) -> Result<LogisticModel> {
    if docs.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} documents but {} labels",
            docs.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::domain("labels must be 0 or 1"));
    }
    if cfg.epochs == 0
        || cfg.batch_size == 0
        || cfg.learning_rate.is_nan()
        || cfg.learning_rate <= 0.0
    {
        return Err(Error::domain(
            "epochs, batch size and learning rate must be positive",
        ));
    }
    let vocab = build_vocab(docs, cfg.vocab_size)?;
    let features: Vec<Vec<f64>> = docs.iter().map(|d| encode(d.as_ref(), &vocab)).collect();
    let v = vocab.len();
    let mut params = vec![0.0; v + 1];
    let mut opt = Adam::new(v + 1, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = loss_and_gradient(&params, &features, labels, batch, cfg.l2);
            opt.step(&mut params, &grad);
        }
    }
    let bias = params.pop().unwrap_or_default();
    Ok(LogisticModel {
        vocab,
        weights: params,
        bias,
    })
}
