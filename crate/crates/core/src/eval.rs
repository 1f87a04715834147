//! Predictive accuracy and calibration metrics.
//!
//! Coverage counts are boundary-inclusive: a standardised residual with
//! `|z| = k` is inside the `k`-interval.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::gp::PredictiveResult;
use crate::{Error, Result};

/// `Φ⁻¹(0.84)`, half-width of the central 68% Gaussian interval.
pub const Z_68: f64 = 0.994_457_883_209_753;
/// `Φ⁻¹(0.975)`, half-width of the central 95% Gaussian interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub cov68: f64,
    pub cov95: f64,
    pub cov1sigma: f64,
    pub cov2sigma: f64,
    pub std_z: f64,
    pub n_test: usize,
}

impl Metrics {
    pub const CSV_HEADER: &'static str = "mae,rmse,cov68,cov95,cov1sigma,cov2sigma,std_z,n_test";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.mae, self.rmse, self.cov68, self.cov95, self.cov1sigma, self.cov2sigma, self.std_z, self.n_test
        )
    }
}

/// Standardised residuals `(y − ŷ) / σ̂`.
pub fn standardized_residuals(pred: &PredictiveResult, truth: &[f64]) -> Result<Vec<f64>> {
    if pred.mean.len() != truth.len() || pred.var.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions, {} variances, {} truths",
            pred.mean.len(),
            pred.var.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidData("no test points".into()));
    }
    if let Some(i) = pred.var.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidData(format!("predictive variance at point {i} is {}", pred.var[i])));
    }
    Ok(truth
        .iter()
        .zip(&pred.mean)
        .zip(&pred.var)
        .map(|((y, m), v)| (y - m) / v.sqrt())
        .collect())
}

pub fn compute_metrics(pred: &PredictiveResult, truth: &[f64]) -> Result<Metrics> {
    let z = standardized_residuals(pred, truth)?;
    let m = truth.len() as f64;
    let mae = truth.iter().zip(&pred.mean).map(|(y, p)| (p - y).abs()).sum::<f64>() / m;
    let rmse = (truth.iter().zip(&pred.mean).map(|(y, p)| (p - y).powi(2)).sum::<f64>() / m).sqrt();
    let frac = |k: f64| z.iter().filter(|v| v.abs() <= k).count() as f64 / m;
    let zbar = z.iter().sum::<f64>() / m;
    let std_z = if z.len() > 1 {
        (z.iter().map(|v| (v - zbar).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Metrics {
        mae,
        rmse,
        cov68: frac(Z_68),
        cov95: frac(Z_95),
        cov1sigma: frac(1.0),
        cov2sigma: frac(2.0),
        std_z,
        n_test: truth.len(),
    })
}

/// Appends `label,<metrics>` to a ledger CSV, writing the header first if
/// the file is new or empty.
pub fn append_ledger(path: &Path, label: &str, m: &Metrics) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if f.metadata()?.len() == 0 {
        writeln!(f, "label,{}", Metrics::CSV_HEADER)?;
    }
    writeln!(f, "{},{}", label.replace(',', ";"), m.csv_row())?;
    Ok(())
}
