//! Shared value types and the threshold/norm arithmetic used by every combiner.
//!
//! Sample ids are kept in canonical (sorted) order. Every series, label vector
//! and prediction matrix carries its id list behind an `Arc`, so aligned
//! containers share one allocation and alignment checks are usually a pointer
//! comparison.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque sample identifier. Never empty.
///
/// Ids order numerically when both are plain decimal integers (so `"9"`
/// precedes `"10"`), otherwise lexically; integers sort before other ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SampleId(String);

impl SampleId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::domain("sample id must not be empty"));
        }
        Ok(SampleId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric(&self) -> Option<u64> {
        if self.0.bytes().all(|b| b.is_ascii_digit()) {
            self.0.parse().ok()
        } else {
            None
        }
    }
}

impl Ord for SampleId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for SampleId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TryFrom<String> for SampleId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        SampleId::new(value)
    }
}

impl From<SampleId> for String {
    fn from(value: SampleId) -> Self {
        value.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonically sorted, duplicate-free list of sample ids.
pub type Ids = Arc<[SampleId]>;

fn sort_pairs<T>(mut pairs: Vec<(SampleId, T)>) -> Result<(Ids, Vec<T>)> {
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    for w in pairs.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::domain(format!("duplicate sample id `{}`", w[0].0)));
        }
    }
    let (ids, values): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((ids.into(), values))
}

fn check_sorted(ids: &[SampleId]) -> Result<()> {
    match ids.windows(2).find(|w| w[0] >= w[1]) {
        Some(w) => Err(Error::domain(format!(
            "sample ids must be unique and sorted; offending id `{}`",
            w[1]
        ))),
        None => Ok(()),
    }
}

/// Fails unless both id lists name exactly the same samples.
pub fn check_aligned(a: &Ids, b: &Ids) -> Result<()> {
    if Arc::ptr_eq(a, b) || a[..] == b[..] {
        return Ok(());
    }
    if a.len() != b.len() {
        return Err(Error::Alignment(format!(
            "sample counts differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let (x, y) = a.iter().zip(b.iter()).find(|(x, y)| x != y).unwrap();
    Err(Error::Alignment(format!(
        "sample sets differ: `{x}` vs `{y}`"
    )))
}

/// Positions of `subset` inside `ids`.
fn positions(ids: &[SampleId], subset: &[SampleId]) -> Result<Vec<usize>> {
    subset
        .iter()
        .map(|id| {
            ids.binary_search(id)
                .map_err(|_| Error::Alignment(format!("sample `{id}` not present")))
        })
        .collect()
}

/// Real-valued series indexed by sample id.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    ids: Ids,
    values: Vec<f64>,
}

impl Series {
    pub fn new(pairs: Vec<(SampleId, f64)>) -> Result<Self> {
        if pairs.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::domain("series values must be finite"));
        }
        let (ids, values) = sort_pairs(pairs)?;
        Ok(Series { ids, values })
    }

    pub fn from_parts(ids: Ids, values: Vec<f64>) -> Result<Self> {
        check_sorted(&ids)?;
        if ids.len() != values.len() {
            return Err(Error::Alignment(format!(
                "{} ids but {} values",
                ids.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("series values must be finite"));
        }
        Ok(Series { ids, values })
    }

    pub fn ids(&self) -> &Ids {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SampleId, f64)> {
        self.ids.iter().zip(self.values.iter().copied())
    }
}

/// Binary ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector {
    ids: Ids,
    labels: Vec<u8>,
}

impl LabelVector {
    pub fn new(pairs: Vec<(SampleId, u8)>) -> Result<Self> {
        let (ids, labels) = sort_pairs(pairs)?;
        Self::from_parts(ids, labels)
    }

    pub fn from_parts(ids: Ids, labels: Vec<u8>) -> Result<Self> {
        check_sorted(&ids)?;
        if labels.is_empty() {
            return Err(Error::domain("label vector needs at least one entry"));
        }
        if ids.len() != labels.len() {
            return Err(Error::Alignment(format!(
                "{} ids but {} labels",
                ids.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::domain(format!("label {bad} is not 0 or 1")));
        }
        Ok(LabelVector { ids, labels })
    }

    pub fn ids(&self) -> &Ids {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn get(&self, id: &SampleId) -> Option<u8> {
        self.ids.binary_search(id).ok().map(|i| self.labels[i])
    }

    /// The labels as a 0/1 real series.
    pub fn to_series(&self) -> Series {
        Series {
            ids: self.ids.clone(),
            values: self.labels.iter().map(|&l| f64::from(l)).collect(),
        }
    }

    /// Restriction to the given ids (which must all be present).
    pub fn select(&self, ids: &[SampleId]) -> Result<LabelVector> {
        let mut subset = ids.to_vec();
        subset.sort();
        let pos = positions(&self.ids, &subset)?;
        LabelVector::from_parts(subset.into(), pos.iter().map(|&i| self.labels[i]).collect())
    }
}

/// K named probability columns over one shared set of sample ids.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    ids: Ids,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl PredictionMatrix {
    pub fn from_parts(ids: Ids, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        check_sorted(&ids)?;
        if names.is_empty() {
            return Err(Error::domain("prediction matrix needs at least one model"));
        }
        if names.len() != columns.len() {
            return Err(Error::domain(format!(
                "{} model names but {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::domain("model name must not be empty"));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::domain(format!("duplicate model name `{name}`")));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != ids.len() {
                return Err(Error::Alignment(format!(
                    "column `{name}` has {} values for {} samples",
                    col.len(),
                    ids.len()
                )));
            }
            if let Some((j, p)) = col
                .iter()
                .enumerate()
                .find(|(_, p)| !(0.0..=1.0).contains(*p))
            {
                return Err(Error::domain(format!(
                    "column `{name}`, sample `{}`: probability {p} outside [0, 1]",
                    ids[j]
                )));
            }
        }
        Ok(PredictionMatrix {
            ids,
            names,
            columns,
        })
    }

    /// Builds a matrix from per-model series, which must all share one id set.
    pub fn from_series(named: Vec<(String, Series)>) -> Result<Self> {
        let Some((_, first)) = named.first() else {
            return Err(Error::domain("prediction matrix needs at least one model"));
        };
        let ids = first.ids.clone();
        let mut names = Vec::with_capacity(named.len());
        let mut columns = Vec::with_capacity(named.len());
        for (name, series) in named {
            check_aligned(&ids, &series.ids)
                .map_err(|e| Error::Alignment(format!("column `{name}`: {e}")))?;
            names.push(name);
            columns.push(series.values);
        }
        Self::from_parts(ids, names, columns)
    }

    pub fn ids(&self) -> &Ids {
        &self.ids
    }

    pub fn model_names(&self) -> &[String] {
        &self.names
    }

    pub fn n_models(&self) -> usize {
        self.names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn column_series(&self, name: &str) -> Result<Series> {
        Ok(Series {
            ids: self.ids.clone(),
            values: self.column(name)?.to_vec(),
        })
    }

    /// Probabilities of sample `j` for the columns at `cols`, in that order.
    pub fn row_into(&self, j: usize, cols: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend(cols.iter().map(|&c| self.columns[c][j]));
    }

    /// Column indices for the named models, in the order given.
    pub fn resolve(&self, names: &[impl AsRef<str>]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| self.column_index(n.as_ref()))
            .collect()
    }

    /// Matrix restricted to the named models, in the order given.
    pub fn select_models(&self, names: &[impl AsRef<str>]) -> Result<PredictionMatrix> {
        let idx = self.resolve(names)?;
        PredictionMatrix::from_parts(
            self.ids.clone(),
            idx.iter().map(|&i| self.names[i].clone()).collect(),
            idx.iter().map(|&i| self.columns[i].clone()).collect(),
        )
    }

    /// Matrix restricted to the given samples (which must all be present).
    pub fn select_rows(&self, ids: &[SampleId]) -> Result<PredictionMatrix> {
        let mut subset = ids.to_vec();
        subset.sort();
        let pos = positions(&self.ids, &subset)?;
        let columns = self
            .columns
            .iter()
            .map(|c| pos.iter().map(|&j| c[j]).collect())
            .collect();
        PredictionMatrix::from_parts(subset.into(), self.names.clone(), columns)
    }
}

/// Decision threshold `t` in the open interval (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t < 1.0 {
            Ok(Threshold(t))
        } else {
            Err(Error::domain(format!("threshold {t} not in (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold(0.5)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = Error;
    fn try_from(t: f64) -> Result<Self> {
        Threshold::new(t)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// Numerically stable logistic function; the caller guarantees `x` is finite.
#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("sigmoid of non-finite value {x}")));
    }
    Ok(logistic(x))
}

/// `sigmoid(score - b)`.
pub fn shifted_sigmoid(score: f64, b: f64) -> Result<f64> {
    if !score.is_finite() || !b.is_finite() {
        return Err(Error::domain("shifted sigmoid of non-finite input"));
    }
    sigmoid(score - b)
}

/// Class indicator on a raw value: 1 iff `x >= t`.
#[inline]
pub fn harden(x: f64, t: Threshold) -> u8 {
    u8::from(x >= t.0)
}

/// Class of a probability: 1 iff `p >= t`.
pub fn assign_class(p: f64, t: Threshold) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(harden(p, t))
}

/// Euclidean norm of a binary function: the square root of its number of ones.
pub fn binary_norm(f: &LabelVector) -> f64 {
    (f.count_positive() as f64).sqrt()
}

/// Norm of the hardened series.
pub fn thresholded_norm(y: &[f64], t: Threshold) -> f64 {
    let ones = y.iter().filter(|&&v| harden(v, t) == 1).count();
    (ones as f64).sqrt()
}

/// Euclidean distance between the hardened versions of `y` and `z`.
pub fn thresholded_distance(y: &Series, z: &Series, t: Threshold) -> Result<f64> {
    check_aligned(&y.ids, &z.ids)?;
    Ok(hardened_distance(&y.values, &z.values, t))
}

pub(crate) fn hardened_distance(y: &[f64], z: &[f64], t: Threshold) -> f64 {
    let diff = y
        .iter()
        .zip(z)
        .filter(|(a, b)| harden(**a, t) != harden(**b, t))
        .count();
    (diff as f64).sqrt()
}

/// Fraction of samples whose hardened prediction equals the label.
pub fn accuracy(pred: &Series, labels: &LabelVector, t: Threshold) -> Result<f64> {
    check_aligned(&pred.ids, &labels.ids)?;
    accuracy_of(&pred.values, &labels.labels, t)
}

pub(crate) fn accuracy_of(pred: &[f64], labels: &[u8], t: Threshold) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::domain("accuracy of an empty set"));
    }
    let mut hits = 0usize;
    for (&p, &l) in pred.iter().zip(labels) {
        if assign_class(p, t)? == l {
            hits += 1;
        }
    }
    Ok(hits as f64 / pred.len() as f64)
}

/// Accuracy of already-hardened labels.
pub(crate) fn label_accuracy(pred: &[u8], labels: &[u8]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}
