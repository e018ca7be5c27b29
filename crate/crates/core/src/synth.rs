//! Synthetic suites of calibrated, optionally correlated probabilistic
//! classifiers.
//!
//! For sample `j` with label `u_j` and sign `s_j = 2u_j − 1`, model `i` sees
//! the latent value
//!
//! ```text
//!     z_ij = μ_i s_j + √ρ g_j + √(1 − ρ) e_ij,    μ_i = Φ⁻¹(a_i)
//! ```
//!
//! with `g_j` shared by all models and `e_ij` private, both standard normal,
//! and outputs `p_ij = σ(γ z_ij)`. Hardening at 0.5 is right exactly when
//! `sign(z_ij) = s_j`, which happens with probability `Φ(μ_i) = a_i`
//! whatever `ρ` and `γ` are. `ρ` controls how strongly the models' errors
//! coincide.
//!
//! # Random stream
//!
//! Everything is drawn from one `ChaCha8Rng` seeded with
//! `SeedableRng::seed_from_u64(seed)`. A uniform variate is
//! `(next_u64() >> 11) · 2⁻⁵³`. A normal variate consumes two uniforms
//! `u1, u2` via Box–Muller, `√(−2 ln(1 − u1)) · cos(2π u2)`. Per sample the
//! draws are, in order: one uniform for the label (`u < balance` gives 1),
//! one normal for `g_j`, then one normal per model for `e_ij`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_aligned, harden, logistic, Ids, LabelVector, PredictionMatrix, SampleId, Threshold,
};

/// Standard normal quantile, Wichura's AS 241 (PPND16). Relative accuracy is
/// about 1e-16 over the whole open interval.
pub fn inv_norm_cdf(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("quantile {q} not in (0, 1)")));
    }
    let d = q - 0.5;
    if d.abs() <= 0.425 {
        let r = 0.180625 - d * d;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * d;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return Ok(num / den);
    }
    let tail = if d < 0.0 { q } else { 1.0 - q };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_049e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    Ok(if d < 0.0 { -value } else { value })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Expected accuracy of each model at threshold 0.5, in [0.5, 0.999].
    pub target_acc: Vec<f64>,
    /// Fraction of latent noise shared by all models, in [0, 1).
    pub rho: f64,
    pub n: usize,
    /// Probability of label 1.
    pub balance: f64,
    /// Slope γ applied to the latent value before the sigmoid.
    pub sharpness: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(target_acc: Vec<f64>, rho: f64, n: usize, seed: u64) -> Result<Self> {
        let spec = SyntheticSpec {
            target_acc,
            rho,
            n,
            balance: 0.5,
            sharpness: 2.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_acc.is_empty() {
            return Err(Error::domain("synthetic suite needs at least one model"));
        }
        if let Some(a) = self.target_acc.iter().find(|a| !(0.5..=0.999).contains(*a)) {
            return Err(Error::domain(format!(
                "target accuracy {a} not in [0.5, 0.999]"
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::domain(format!("rho {} not in [0, 1)", self.rho)));
        }
        if self.n == 0 {
            return Err(Error::domain("sample count must be positive"));
        }
        if !(0.0..=1.0).contains(&self.balance) {
            return Err(Error::domain(format!(
                "balance {} not in [0, 1]",
                self.balance
            )));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::domain("sharpness must be positive"));
        }
        Ok(())
    }

    pub fn model_names(&self) -> Vec<String> {
        (1..=self.target_acc.len())
            .map(|i| format!("M{i}"))
            .collect()
    }
}

struct Stream(ChaCha8Rng);

impl Stream {
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Decimal ids `0 .. n-1`.
pub fn sequential_ids(n: usize) -> Ids {
    (0..n)
        .map(|j| SampleId::new(j.to_string()).expect("non-empty id"))
        .collect::<Vec<_>>()
        .into()
}

pub fn generate(spec: &SyntheticSpec) -> Result<(LabelVector, PredictionMatrix)> {
    spec.validate()?;
    let k = spec.target_acc.len();
    let mu = spec
        .target_acc
        .iter()
        .map(|&a| if a == 0.5 { Ok(0.0) } else { inv_norm_cdf(a) })
        .collect::<Result<Vec<_>>>()?;
    let shared = spec.rho.sqrt();
    let private = (1.0 - spec.rho).sqrt();
    let mut rng = Stream(ChaCha8Rng::seed_from_u64(spec.seed));
    let mut labels = Vec::with_capacity(spec.n);
    let mut columns = vec![Vec::with_capacity(spec.n); k];
    for _ in 0..spec.n {
        let u = u8::from(rng.uniform() < spec.balance);
        let s = if u == 1 { 1.0 } else { -1.0 };
        let g = rng.normal();
        for (col, m) in columns.iter_mut().zip(&mu) {
            let z = m * s + shared * g + private * rng.normal();
            col.push(logistic(spec.sharpness * z));
        }
        labels.push(u);
    }
    let ids = sequential_ids(spec.n);
    let labels = LabelVector::from_parts(ids.clone(), labels)?;
    let matrix = PredictionMatrix::from_parts(ids, spec.model_names(), columns)?;
    Ok((labels, matrix))
}

/// Pairwise Pearson correlation of the models' error indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `None` where one of the two error indicators is constant.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    /// Mean of the defined off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let (true, Some(v)) = (i != j, v) {
                    total += v;
                    count += 1;
                }
            }
        }
        (count > 0).then(|| total / count as f64)
    }
}

pub fn estimate_error_correlation(
    m: &PredictionMatrix,
    labels: &LabelVector,
) -> Result<CorrelationMatrix> {
    check_aligned(m.ids(), labels.ids())?;
    let half = Threshold::default();
    let n = m.n_samples() as f64;
    let errors: Vec<Vec<f64>> = (0..m.n_models())
        .map(|i| {
            m.column_at(i)
                .iter()
                .zip(labels.labels())
                .map(|(&p, &u)| f64::from(u8::from(harden(p, half) != u)))
                .collect()
        })
        .collect();
    let means: Vec<f64> = errors.iter().map(|e| e.iter().sum::<f64>() / n).collect();
    let k = errors.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        values[i][i] = Some(1.0);
        for j in (i + 1)..k {
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (x, y) in errors[i].iter().zip(&errors[j]) {
                let dx = x - means[i];
                let dy = y - means[j];
                sxy += dx * dy;
                sxx += dx * dx;
                syy += dy * dy;
            }
            let r = if sxx > 0.0 && syy > 0.0 {
                Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
            } else {
                None
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: m.model_names().to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::accuracy;

    /// Φ via the error function, then bisection.
    fn quantile_oracle(q: f64) -> f64 {
        let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
        assert!((inv_norm_cdf(0.8413).unwrap() - 1.0).abs() < 1e-3);
        assert!((inv_norm_cdf(0.8413).unwrap() - quantile_oracle(0.8413)).abs() < 1e-9);
        // Φ⁻¹(0.9)
        assert!((inv_norm_cdf(0.9).unwrap() - 1.2815515655446004).abs() < 1e-12);
        for q in [0.001, 0.2, 0.37] {
            assert!((inv_norm_cdf(1.0 - q).unwrap() + inv_norm_cdf(q).unwrap()).abs() < 1e-12);
        }
        assert!(inv_norm_cdf(0.0).is_err());
        assert!(inv_norm_cdf(1.0).is_err());
        assert!(inv_norm_cdf(f64::NAN).is_err());
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        let mut qs: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        qs.extend([
            1e-300,
            1e-20,
            1e-10,
            1e-5,
            0.075,
            0.925,
            1.0 - 1e-5,
            1.0 - 1e-10,
        ]);
        for q in qs {
            let a = inv_norm_cdf(q).unwrap();
            let b = quantile_oracle(q);
            assert!(
                (a - b).abs() <= 1e-6 * b.abs().max(1.0),
                "q={q}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::new(vec![0.8, 0.9], 0.3, 500, 11).unwrap();
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SyntheticSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).unwrap().1, generate(&other).unwrap().1);
    }

    #[test]
    fn coin_flip_model() {
        let spec = SyntheticSpec::new(vec![0.5], 0.0, 20_000, 3).unwrap();
        let (labels, m) = generate(&spec).unwrap();
        let acc = accuracy(
            &m.column_series("M1").unwrap(),
            &labels,
            Threshold::default(),
        )
        .unwrap();
        assert!((acc - 0.5).abs() < 4.0 * (0.25f64 / 20_000.0).sqrt());
    }

    #[test]
    fn calibrated_accuracy_at_large_n() {
        let spec = SyntheticSpec::new(vec![0.85], 0.3, 100_000, 5).unwrap();
        let (labels, m) = generate(&spec).unwrap();
        let acc = accuracy(
            &m.column_series("M1").unwrap(),
            &labels,
            Threshold::default(),
        )
        .unwrap();
        assert!(
            (acc - 0.85).abs() <= 3.0 * (0.85f64 * 0.15 / 100_000.0).sqrt(),
            "{acc}"
        );
    }

    #[test]
    fn sharpness_does_not_change_decisions() {
        let spec = SyntheticSpec::new(vec![0.7, 0.9, 0.8], 0.4, 2_000, 9).unwrap();
        let sharp = SyntheticSpec {
            sharpness: 7.5,
            ..spec.clone()
        };
        let (_, a) = generate(&spec).unwrap();
        let (_, b) = generate(&sharp).unwrap();
        for i in 0..3 {
            let ha: Vec<u8> = a.column_at(i).iter().map(|&p| u8::from(p >= 0.5)).collect();
            let hb: Vec<u8> = b.column_at(i).iter().map(|&p| u8::from(p >= 0.5)).collect();
            assert_eq!(ha, hb);
        }
    }

    #[test]
    fn balance_controls_label_prior() {
        let spec = SyntheticSpec {
            balance: 0.2,
            ..SyntheticSpec::new(vec![0.9], 0.0, 50_000, 1).unwrap()
        };
        let (labels, _) = generate(&spec).unwrap();
        let frac = labels.count_positive() as f64 / 50_000.0;
        assert!((frac - 0.2).abs() < 0.01);
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec::new(vec![], 0.0, 10, 0).is_err());
        assert!(SyntheticSpec::new(vec![0.4], 0.0, 10, 0).is_err());
        assert!(SyntheticSpec::new(vec![0.9995], 0.0, 10, 0).is_err());
        assert!(SyntheticSpec::new(vec![0.9], 1.0, 10, 0).is_err());
        assert!(SyntheticSpec::new(vec![0.9], 0.0, 0, 0).is_err());
    }

    #[test]
    fn ids_are_canonically_sorted() {
        let ids = sequential_ids(101);
        assert_eq!(ids[0].as_str(), "0");
        assert_eq!(ids[100].as_str(), "100");
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn correlation_examples() {
        let spec = SyntheticSpec::new(vec![0.8, 0.8], 0.0, 100_000, 21).unwrap();
        let (labels, m) = generate(&spec).unwrap();
        let c = estimate_error_correlation(&m, &labels).unwrap();
        assert_eq!(c.values[0][0], Some(1.0));
        assert_eq!(c.values[1][1], Some(1.0));
        assert!(c.values[0][1].unwrap().abs() < 0.02, "{:?}", c.values[0][1]);

        let dup = PredictionMatrix::from_parts(
            m.ids().clone(),
            vec!["a".into(), "b".into()],
            vec![m.column_at(0).to_vec(), m.column_at(0).to_vec()],
        )
        .unwrap();
        let c = estimate_error_correlation(&dup, &labels).unwrap();
        assert!((c.values[0][1].unwrap() - 1.0).abs() < 1e-12);

        // a perfect model has a constant error indicator
        let perfect: Vec<f64> = labels.labels().iter().map(|&u| f64::from(u)).collect();
        let m2 = PredictionMatrix::from_parts(
            m.ids().clone(),
            vec!["a".into(), "p".into()],
            vec![m.column_at(0).to_vec(), perfect],
        )
        .unwrap();
        let c = estimate_error_correlation(&m2, &labels).unwrap();
        assert_eq!(c.values[0][1], None);
        assert_eq!(c.values[1][1], Some(1.0));
    }
}
