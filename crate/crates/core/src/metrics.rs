//! Goodness-of-fit measures: NRMSE fit, max-scaled RMS error and
//! cross-dataset aggregates.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: measured has {measured} samples, predicted has {predicted}")]
    LengthMismatch { measured: usize, predicted: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("NRMSE fit undefined: measured signal is constant")]
    ConstantSignal,
    #[error("scaled RMS undefined: measured signal has zero maximum magnitude")]
    ZeroScale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult {
    /// Percent; 100 is a perfect fit, may be negative.
    pub nrmse_fit: f64,
    /// Percent of the maximum output magnitude.
    pub scaled_rms: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean_fit: f64,
    pub fit_standard_error: f64,
    pub mean_scaled_rms: f64,
    pub rms_standard_error: f64,
    pub count: usize,
}

fn check_lengths(y: &[f64], yhat: &[f64], needed: usize) -> Result<(), MetricsError> {
    if y.len() != yhat.len() {
        return Err(MetricsError::LengthMismatch {
            measured: y.len(),
            predicted: yhat.len(),
        });
    }
    if y.len() < needed {
        return Err(MetricsError::TooShort {
            needed,
            got: y.len(),
        });
    }
    Ok(())
}

/// `100 (1 - ||y - yhat|| / ||y - mean(y)||)`.
pub fn nrmse_fit(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(y, yhat, 2)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let spread: f64 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(MetricsError::ConstantSignal);
    }
    let err: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

/// RMS error in percent of `max |y|`.
pub fn scaled_rms(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(y, yhat, 1)?;
    let peak = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(MetricsError::ZeroScale);
    }
    let mse = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    Ok(100.0 / peak * mse.sqrt())
}

pub fn evaluate(y: &[f64], yhat: &[f64]) -> Result<MetricResult, MetricsError> {
    Ok(MetricResult {
        nrmse_fit: nrmse_fit(y, yhat)?,
        scaled_rms: scaled_rms(y, yhat)?,
        n_samples: y.len(),
    })
}

/// Mean and standard error (sample SD over sqrt k; zero when k = 1).
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, var.sqrt() / (k as f64).sqrt())
}

/// Returns `None` for an empty slice.
pub fn aggregate(results: &[MetricResult]) -> Option<Aggregate> {
    if results.is_empty() {
        return None;
    }
    let fits: Vec<f64> = results.iter().map(|r| r.nrmse_fit).collect();
    let rms: Vec<f64> = results.iter().map(|r| r.scaled_rms).collect();
    let (mean_fit, fit_standard_error) = mean_and_standard_error(&fits);
    let (mean_scaled_rms, rms_standard_error) = mean_and_standard_error(&rms);
    Some(Aggregate {
        mean_fit,
        fit_standard_error,
        mean_scaled_rms,
        rms_standard_error,
        count: results.len(),
    })
}
