//! Exact GP log marginal likelihood and closed-form prediction.
//!
//! Every call factorises the training covariance once; nothing is cached
//! between calls.

use nalgebra::{DMatrix, DVector};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::kernel::{cross_gram, gram, GramMatrix, KernelProfile};
use crate::metric::{build_metric, MetricParams, SpdMetric};
use crate::{Error, Result, Vec3};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Kernel profile, metric parameters and observation noise variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GpModel {
    #[serde(default)]
    pub profile: KernelProfile,
    pub params: MetricParams,
    pub noise_var: f64,
}

impl GpModel {
    pub fn new(profile: KernelProfile, params: MetricParams, noise_var: f64) -> Self {
        GpModel { profile, params, noise_var }
    }

    pub fn metric(&self) -> Result<SpdMetric> {
        build_metric(&self.params)
    }

    /// Factorised covariance of the noisy training outputs.
    pub fn gram(&self, x: &[Vec3]) -> Result<GramMatrix> {
        gram(self.profile, &self.metric()?, x, self.noise_var)
    }
}

/// Inputs with scalar outputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec3>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec3>, y: Vec<f64>) -> Result<Self> {
        let d = Dataset { x, y };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs but {} outputs",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.y.is_empty() {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        if let Some(i) = self.x.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidData(format!("input row {i} is not finite")));
        }
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("output {i} is not finite")));
        }
        Ok(())
    }

    /// Rows at the given indices, in order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Predictive mean and variance of noisy outputs at test inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveResult {
    pub mean: Vec<f64>,
    /// Includes the noise variance.
    pub var: Vec<f64>,
}

impl PredictiveResult {
    pub fn sd(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

/// A model conditioned on training data: the Cholesky factor and `K⁻¹y`.
#[derive(Clone, Debug)]
pub struct Posterior {
    model: GpModel,
    metric: SpdMetric,
    train_x: Vec<Vec3>,
    gram: GramMatrix,
    alpha: DVector<f64>,
    half_solve_norm: f64,
}

impl Posterior {
    pub fn new(model: &GpModel, train: &Dataset) -> Result<Self> {
        train.validate()?;
        let metric = model.metric()?;
        let gram = gram(model.profile, &metric, &train.x, model.noise_var)?;
        let y = DVector::from_column_slice(&train.y);
        // w = C⁻¹ y, then α = C⁻ᵀ w.
        let w = gram
            .factor()
            .l_dirty()
            .solve_lower_triangular(&y)
            .ok_or_else(|| Error::NotSpd("triangular solve failed".into()))?;
        let half_solve_norm = w.norm_squared();
        let alpha = gram
            .factor()
            .l_dirty()
            .tr_solve_lower_triangular(&w)
            .ok_or_else(|| Error::NotSpd("triangular solve failed".into()))?;
        Ok(Posterior {
            model: *model,
            metric,
            train_x: train.x.clone(),
            gram,
            alpha,
            half_solve_norm,
        })
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// `−½ yᵀK⁻¹y − ½ log det K − (n/2) log 2π`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.train_x.len() as f64;
        -0.5 * self.half_solve_norm - 0.5 * self.gram.log_det() - 0.5 * n * LN_2PI
    }

    pub fn predict(&self, x_test: &[Vec3]) -> Result<PredictiveResult> {
        if let Some(i) = x_test.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidData(format!("test row {i} is not finite")));
        }
        // K* is n × m so each column is one test point.
        let k_star: DMatrix<f64> =
            cross_gram(self.model.profile, &self.metric, x_test, &self.train_x).transpose();
        let mean = k_star.tr_mul(&self.alpha);
        let v = self
            .gram
            .factor()
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .ok_or_else(|| Error::NotSpd("triangular solve failed".into()))?;
        let prior = 1.0 + self.model.noise_var;
        let var = v
            .column_iter()
            .map(|c| (prior - c.norm_squared()).max(self.model.noise_var))
            .collect();
        Ok(PredictiveResult {
            mean: mean.iter().copied().collect(),
            var,
        })
    }
}

/// Log marginal likelihood of `data` under `model`.
pub fn log_marginal_likelihood(model: &GpModel, data: &Dataset) -> Result<f64> {
    Ok(Posterior::new(model, data)?.log_marginal_likelihood())
}

/// Posterior predictive mean and variance at `x_test`.
pub fn predict(model: &GpModel, train: &Dataset, x_test: &[Vec3]) -> Result<PredictiveResult> {
    Posterior::new(model, train)?.predict(x_test)
}
