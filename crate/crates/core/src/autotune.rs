//! Unsupervised threshold tuning.
//!
//! Similarities are assumed to be dominated by different-place pairs. A
//! normal model is fitted robustly (median and normalized MAD) so that the
//! same-place outliers do not inflate it, and the threshold is the model
//! quantile at a chosen probability.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::error::{EprError, Result};

/// Tail probability used for the intra-database threshold.
pub const P_DB: f64 = 1.0 - 1e-6;
/// Tail probability used for the relocalization threshold.
pub const P_RELOC: f64 = 0.95;
/// MAD normalization constant.
pub const MADN_CONSTANT: f64 = 0.675;

/// A fitted normal model `N(mu, sigma^2)` and its quantile threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdModel {
    pub mu: f64,
    pub sigma: f64,
    pub probability: f64,
    pub theta: f64,
}

impl ThresholdModel {
    pub fn from_fit(mu: f64, sigma: f64, probability: f64) -> Result<Self> {
        if sigma.is_nan() || sigma < 0.0 {
            return Err(EprError::Domain(format!("sigma must be >= 0, got {sigma}")));
        }
        let theta = mu + sigma * normal_quantile(probability)?;
        Ok(Self {
            mu,
            sigma,
            probability,
            theta,
        })
    }
}

/// Median with the even-length convention (mean of the two central order
/// statistics). Reorders `values`.
fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Robust location/scale: `mu = median(x)`, `sigma = median(|x - mu|) / 0.675`.
pub fn robust_fit(samples: &[f64]) -> Result<(f64, f64)> {
    robust_fit_in_place(&mut samples.to_vec())
}

/// Like [`robust_fit`] but reuses the buffer; its contents are overwritten.
pub fn robust_fit_in_place(samples: &mut [f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(EprError::Domain("robust fit of an empty sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(EprError::Domain("robust fit of a non-finite sample".into()));
    }
    let mu = median_in_place(samples);
    for v in samples.iter_mut() {
        *v = (*v - mu).abs();
    }
    let mad = median_in_place(samples);
    Ok((mu, mad / MADN_CONSTANT))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error ~1e-9) followed by one
/// Newton step on the CDF. The step works on the lower tail mass for
/// `p > 0.5`, so the upper tail keeps full precision.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EprError::Domain(format!("probability {p} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549671010114381e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let x = if p < P_LOW {
        tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    };

    // Newton refinement: residual F(x) - p, written on the smaller tail.
    let residual = if p > 0.5 {
        (1.0 - p) - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    } else {
        normal_cdf(x) - p
    };
    Ok(x - residual / normal_pdf(x))
}

/// Fits the robust normal model to `samples` and returns the threshold at
/// probability `p`.
pub fn autotune(samples: &[f64], p: f64) -> Result<ThresholdModel> {
    let (mu, sigma) = robust_fit(samples)?;
    ThresholdModel::from_fit(mu, sigma, p)
}
