//! Interval check for the weight sum `W = Σ w_i` of a trained combiner.
//!
//! With `A = ‖u‖_t`, `e = ‖u − σ_b(y)‖_t` for the combined predictor and
//! `ê = ‖u − σ_b(ŷ)‖_t` for the interpolation predictor `ŷ = y / W`,
//!
//! ```text
//!     (A − e) / (A + ê)  ≤  W  ≤  (A + e) / (A − ê)
//! ```
//!
//! All norms are thresholded norms: hardened at `t`, then Euclidean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_aligned, hardened_distance, logistic, thresholded_norm, LabelVector, PredictionMatrix,
};
use crate::nn::{predict, CombinerWeights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub weight_sum: f64,
    pub lower: f64,
    /// `+inf` when the upper bound's denominator is not positive.
    pub upper: f64,
    pub norm_u: f64,
    pub err_y: f64,
    pub err_yhat: f64,
    pub contained: bool,
    pub degenerate: bool,
}

pub fn weight_sum(weights: &CombinerWeights) -> f64 {
    weights.weights().iter().sum()
}

/// `Σ (w_i / W) p_i`.
pub fn interpolation_score(weights: &CombinerWeights, p: &[f64]) -> Result<f64> {
    let total = weight_sum(weights);
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    if p.len() != weights.k() {
        return Err(Error::domain(format!(
            "expected {} probabilities, got {}",
            weights.k(),
            p.len()
        )));
    }
    Ok(weights
        .weights()
        .iter()
        .zip(p)
        .map(|(w, x)| (w / total) * x)
        .sum())
}

/// Both sides of the weight-sum interval, from the norms themselves.
pub fn interval(norm_u: f64, err_y: f64, err_yhat: f64) -> (f64, f64, bool) {
    let lower_den = norm_u + err_yhat;
    let upper_den = norm_u - err_yhat;
    let lower = if lower_den > 0.0 {
        (norm_u - err_y) / lower_den
    } else {
        f64::NEG_INFINITY
    };
    if upper_den > 0.0 && lower_den > 0.0 {
        (lower, (norm_u + err_y) / upper_den, false)
    } else {
        (lower, f64::INFINITY, true)
    }
}

/// Evaluates the weight-sum interval for `weights` on `(m, labels)`.
///
/// `σ_b(ŷ)` uses the same shift and threshold as the combined predictor.
pub fn theorem_bounds(
    weights: &CombinerWeights,
    m: &PredictionMatrix,
    labels: &LabelVector,
) -> Result<BoundReport> {
    check_aligned(m.ids(), labels.ids())?;
    let total = weight_sum(weights);
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let t = weights.threshold();
    let u = labels.to_series();
    let y = predict(weights, m)?;

    let cols = m.resolve(weights.model_names())?;
    let mut row = Vec::with_capacity(cols.len());
    let mut yhat = Vec::with_capacity(m.n_samples());
    for j in 0..m.n_samples() {
        m.row_into(j, &cols, &mut row);
        yhat.push(logistic(
            interpolation_score(weights, &row)? - weights.shift(),
        ));
    }

    let norm_u = thresholded_norm(u.values(), t);
    let err_y = hardened_distance(u.values(), y.values(), t);
    let err_yhat = hardened_distance(u.values(), &yhat, t);
    let (lower, upper, degenerate) = interval(norm_u, err_y, err_yhat);
    Ok(BoundReport {
        weight_sum: total,
        lower,
        upper,
        norm_u,
        err_y,
        err_yhat,
        contained: lower <= total && total <= upper,
        degenerate,
    })
}
