//! Per-command configuration documents and their JSON schemas.

use std::path::PathBuf;

use schemars::{schema_for, JsonSchema};
use serde::{Deserialize, Serialize};

use rotgp_core::data::SyntheticConfig;
use rotgp_core::experiment::{ExperimentConfig, FitConfig};
use rotgp_core::mcmc::{ChainConfig, ModelTemplate, PosteriorSummary, Priors, ProposalScales};
use rotgp_core::metric::MetricKind;

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FitRun {
    pub train: PathBuf,
    pub fit: FitConfig,
}

impl FitRun {
    pub fn new(train: PathBuf, kind: MetricKind) -> Self {
        FitRun {
            train,
            fit: FitConfig {
                template: ModelTemplate {
                    kind,
                    profile: Default::default(),
                    noise_var: 0.05 * 0.05,
                    sample_noise: false,
                },
                priors: Priors::default(),
                scales: ProposalScales::default(),
                chain: ChainConfig::default(),
            },
        }
    }

    pub fn validate(&self) -> rotgp_core::Result<()> {
        self.fit.chain.validate()?;
        self.fit.priors.validate()?;
        self.fit.scales.validate()?;
        let nv = self.fit.template.noise_var;
        if !(nv.is_finite() && nv > 0.0) {
            return Err(rotgp_core::Error::InvalidParameter(format!("noise_var must be positive, got {nv}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PredictRun {
    pub train: PathBuf,
    pub test: PathBuf,
    pub summary: Option<PathBuf>,
    #[serde(default)]
    pub chain: Option<PathBuf>,
    #[serde(default)]
    pub posterior_mean_of_predictions: bool,
}

impl PredictRun {
    pub fn new(train: PathBuf, test: PathBuf) -> Self {
        PredictRun { train, test, summary: None, chain: None, posterior_mean_of_predictions: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRun {
    pub predictions: PathBuf,
    #[serde(default)]
    pub ledger: Option<PathBuf>,
    #[serde(default)]
    pub label: Option<String>,
}

impl EvaluateRun {
    pub fn new(predictions: PathBuf) -> Self {
        EvaluateRun { predictions, ledger: None, label: None }
    }
}

/// `(file stem, schema)` for every JSON document the tool reads or writes.
pub fn schemas() -> Vec<(&'static str, schemars::schema::RootSchema)> {
    vec![
        ("generate", schema_for!(SyntheticConfig)),
        ("fit", schema_for!(FitRun)),
        ("predict", schema_for!(PredictRun)),
        ("evaluate", schema_for!(EvaluateRun)),
        ("experiment", schema_for!(ExperimentConfig)),
        ("summary", schema_for!(PosteriorSummary)),
    ]
}
