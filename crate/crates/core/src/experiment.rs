//! End-to-end pipelines: fit, predict, evaluate, and the synthetic
//! comparison scenarios.

use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, grid_points, holdout_planes, linspace, sample_outputs, save_csv, write_predictions,
    Axis, PredictionTable, SplitDataset, SyntheticConfig, DEFAULT_PLANE_TOL,
};
use crate::eval::{append_ledger, compute_metrics, Metrics};
use crate::gp::{Dataset, GpModel, Posterior, PredictiveResult};
use crate::kernel::KernelProfile;
use crate::mcmc::{
    run_chain, summarize, write_chain_csv, Chain, ChainConfig, ModelTemplate, PosteriorSummary, Priors,
    ProposalScales, Sample, Target,
};
use crate::metric::{build_metric, eigen_summary, misalignment_angles, AnisotropySummary, MetricKind, MetricParams};
use crate::{Error, Result, Vec3};

/// Everything needed to run one chain on a training set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub template: ModelTemplate,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub scales: ProposalScales,
    #[serde(default)]
    pub chain: ChainConfig,
}

pub struct Fit {
    pub chain: Chain,
    pub summary: PosteriorSummary,
}

pub fn fit(train: &Dataset, cfg: &FitConfig) -> Result<Fit> {
    let target = Target::new(train, cfg.template, cfg.priors);
    let chain = run_chain(&cfg.chain, &target, &cfg.scales)?;
    let summary = summarize(&chain)?;
    Ok(Fit { chain, summary })
}

/// Plug-in prediction at fixed parameters.
pub fn predict_plugin(model: &GpModel, train: &Dataset, x_test: &[Vec3]) -> Result<PredictiveResult> {
    Posterior::new(model, train)?.predict(x_test)
}

/// Equal-weight mixture of the per-sample predictive distributions.
///
/// The mixture variance is `E[var] + E[mean²] − (E[mean])²`.
pub fn predict_mixture(
    samples: &[Sample],
    profile: KernelProfile,
    train: &Dataset,
    x_test: &[Vec3],
) -> Result<PredictiveResult> {
    if samples.is_empty() {
        return Err(Error::InvalidData("no samples to average over".into()));
    }
    let m = x_test.len();
    let mut mean = vec![0.0; m];
    let mut second = vec![0.0; m];
    for s in samples {
        let p = predict_plugin(&s.state.model(profile), train, x_test)?;
        for j in 0..m {
            mean[j] += p.mean[j];
            second[j] += p.var[j] + p.mean[j] * p.mean[j];
        }
    }
    let k = samples.len() as f64;
    let var = (0..m)
        .map(|j| {
            let mu = mean[j] / k;
            (second[j] / k - mu * mu).max(0.0)
        })
        .collect();
    Ok(PredictiveResult { mean: mean.into_iter().map(|v| v / k).collect(), var })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum Scenario {
    #[serde(rename = "d1")]
    D1,
    #[serde(rename = "d2")]
    D2,
    #[serde(rename = "plane-holdout")]
    PlaneHoldout,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d1" => Ok(Scenario::D1),
            "d2" => Ok(Scenario::D2),
            "plane-holdout" => Ok(Scenario::PlaneHoldout),
            _ => Err(Error::InvalidParameter(format!("unknown scenario `{s}`"))),
        }
    }
}

/// A gridded field with whole `x`-planes held out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PlaneHoldoutConfig {
    /// Number of `x` levels spanning `[−1, 1]`.
    pub x_levels: usize,
    /// Number of `y` and `z` levels spanning `[−yz_half_width, yz_half_width]`.
    pub yz_levels: usize,
    pub yz_half_width: f64,
    /// Planes held out together, chosen uniformly without replacement.
    pub n_planes: usize,
    pub generator: GpModel,
}

impl Default for PlaneHoldoutConfig {
    fn default() -> Self {
        PlaneHoldoutConfig {
            x_levels: 11,
            yz_levels: 7,
            yz_half_width: 0.9,
            n_planes: 5,
            generator: GpModel::new(
                KernelProfile::SquaredExponential,
                MetricParams::rotational([0.4, 0.2, 0.8], [0.7, -0.4, 1.0]),
                0.05 * 0.05,
            ),
        }
    }
}

impl PlaneHoldoutConfig {
    pub fn x_values(&self) -> Vec<f64> {
        linspace(-1.0, 1.0, self.x_levels)
    }

    pub fn grid(&self) -> Vec<Vec3> {
        let yz = linspace(-self.yz_half_width, self.yz_half_width, self.yz_levels);
        grid_points(&self.x_values(), &yz, &yz)
    }
}

fn default_models() -> Vec<MetricKind> {
    MetricKind::ALL.to_vec()
}

fn default_n_train() -> usize {
    300
}

fn default_n_test() -> usize {
    150
}

fn default_noise_var() -> f64 {
    0.05 * 0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Seed for data generation and plane selection.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_models")]
    pub models: Vec<MetricKind>,
    #[serde(default)]
    pub profile: KernelProfile,
    /// Noise variance held fixed while fitting.
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default)]
    pub sample_noise: bool,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub scales: ProposalScales,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub plane: PlaneHoldoutConfig,
    /// Average predictions over posterior samples instead of plugging in the
    /// posterior means.
    #[serde(default)]
    pub mixture_predictions: bool,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        ExperimentConfig {
            scenario,
            seed,
            n_train: default_n_train(),
            n_test: default_n_test(),
            models: default_models(),
            profile: KernelProfile::SquaredExponential,
            noise_var: default_noise_var(),
            sample_noise: false,
            priors: Priors::default(),
            scales: ProposalScales::default(),
            chain: ChainConfig::default(),
            plane: PlaneHoldoutConfig::default(),
            mixture_predictions: false,
        }
    }

    pub fn fit_config(&self, kind: MetricKind) -> FitConfig {
        FitConfig {
            template: ModelTemplate {
                kind,
                profile: self.profile,
                noise_var: self.noise_var,
                sample_noise: self.sample_noise,
            },
            priors: self.priors,
            scales: self.scales,
            chain: self.chain,
        }
    }

    /// The generating model of the scenario.
    pub fn generator(&self) -> GpModel {
        match self.scenario {
            Scenario::D1 => SyntheticConfig::d1(1, 1, 0).generator,
            Scenario::D2 => SyntheticConfig::d2(1, 1, 0).generator,
            Scenario::PlaneHoldout => self.plane.generator,
        }
    }
}

/// One comparison-table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ComparisonRow {
    pub model: MetricKind,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub ranges: [f64; 3],
    /// Angles between estimated and generating principal directions.
    pub misalignment_deg: [f64; 3],
    /// Posterior median of the rotation angle (rotational model only).
    pub geodesic_median_deg: Option<f64>,
    pub acceptance_rate: f64,
    pub acceptance_flagged: bool,
}

pub const COMPARISON_HEADER: &str = "model,mae,rmse,cov68,cov95,cov1sigma,cov2sigma,std_z,n_test,range_1,range_2,range_3,misalign_1_deg,misalign_2_deg,misalign_3_deg,geodesic_median_deg,acceptance_rate,acceptance_flagged";

impl ComparisonRow {
    pub fn csv_row(&self) -> String {
        let r = &self.ranges;
        let a = &self.misalignment_deg;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.metrics.csv_row(),
            r[0],
            r[1],
            r[2],
            a[0],
            a[1],
            a[2],
            self.geodesic_median_deg.map_or(String::new(), |v| v.to_string()),
            self.acceptance_rate,
            self.acceptance_flagged,
        )
    }
}

/// Mean absolute error on each held-out plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PlaneRow {
    pub plane: f64,
    pub n_points: usize,
    /// `(model, mae)` pairs in the configured model order.
    pub mae: Vec<(MetricKind, f64)>,
}

impl PlaneRow {
    pub fn mae_of(&self, kind: MetricKind) -> Option<f64> {
        self.mae.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }
}

pub struct ModelRun {
    pub kind: MetricKind,
    pub fit: Fit,
    pub predictions: PredictionTable,
    pub metrics: Metrics,
}

pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub data: SplitDataset,
    pub truth: AnisotropySummary,
    pub runs: Vec<ModelRun>,
    pub rows: Vec<ComparisonRow>,
    pub planes: Option<Vec<PlaneRow>>,
}

impl ExperimentReport {
    pub fn run(&self, kind: MetricKind) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.kind == kind)
    }

    pub fn row(&self, kind: MetricKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.model == kind)
    }
}

/// Generates the plane hold-out data: one joint draw over the full grid,
/// then `n_planes` random `x`-planes held out together.
pub fn plane_holdout_data(cfg: &PlaneHoldoutConfig, seed: u64) -> Result<SplitDataset> {
    if cfg.n_planes == 0 || cfg.n_planes >= cfg.x_levels {
        return Err(Error::InvalidParameter(format!(
            "need 0 < n_planes < x_levels, got {} of {}",
            cfg.n_planes, cfg.x_levels
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = cfg.grid();
    let y = sample_outputs(&cfg.generator, &x, &mut rng)?;
    let full = Dataset::new(x, y)?;
    let levels = cfg.x_values();
    let mut chosen: Vec<usize> = sample_indices(&mut rng, levels.len(), cfg.n_planes).into_vec();
    chosen.sort_unstable();
    let planes: Vec<f64> = chosen.iter().map(|&i| levels[i]).collect();
    let mut split = holdout_planes(&full, Axis::X, &planes, &[], DEFAULT_PLANE_TOL)?;
    split.provenance.seed = Some(seed);
    split.provenance.rng = Some(crate::RNG_NAME.into());
    split.provenance.config = serde_json::json!({
        "plane": cfg,
        "held_out_x": planes,
    });
    Ok(split)
}

fn scenario_data(cfg: &ExperimentConfig) -> Result<SplitDataset> {
    match cfg.scenario {
        Scenario::D1 => generate_synthetic(&SyntheticConfig::d1(cfg.n_train, cfg.n_test, cfg.seed)),
        Scenario::D2 => generate_synthetic(&SyntheticConfig::d2(cfg.n_train, cfg.n_test, cfg.seed)),
        Scenario::PlaneHoldout => plane_holdout_data(&cfg.plane, cfg.seed),
    }
}

/// Fits one model and evaluates it on the test split.
pub fn run_model(cfg: &ExperimentConfig, kind: MetricKind, data: &SplitDataset) -> Result<ModelRun> {
    let fit = fit(&data.train, &cfg.fit_config(kind))?;
    let pred = if cfg.mixture_predictions {
        predict_mixture(&fit.chain.samples, cfg.profile, &data.train, &data.test.x)?
    } else {
        predict_plugin(&fit.summary.model(), &data.train, &data.test.x)?
    };
    let metrics = compute_metrics(&pred, &data.test.y)?;
    let predictions = PredictionTable::new(data.test.x.clone(), Some(data.test.y.clone()), &pred);
    Ok(ModelRun { kind, fit, predictions, metrics })
}

fn comparison_row(run: &ModelRun, truth: &AnisotropySummary) -> ComparisonRow {
    let s = &run.fit.summary;
    let (accepted, proposed) = s
        .acceptance
        .iter()
        .fold((0, 0), |(a, p), b| (a + b.accepted, p + b.proposed));
    ComparisonRow {
        model: run.kind,
        metrics: run.metrics,
        ranges: s.anisotropy.ranges,
        misalignment_deg: misalignment_angles(&s.anisotropy, truth),
        geodesic_median_deg: s.geodesic_deg.as_ref().map(|g| g.median),
        acceptance_rate: if proposed == 0 { 0.0 } else { accepted as f64 / proposed as f64 },
        acceptance_flagged: s.acceptance_flagged,
    }
}

fn plane_rows(data: &SplitDataset, runs: &[ModelRun]) -> Vec<PlaneRow> {
    let mut planes: Vec<f64> = data.test.x.iter().map(|x| x[0]).collect();
    planes.sort_by(f64::total_cmp);
    planes.dedup_by(|a, b| (*a - *b).abs() <= DEFAULT_PLANE_TOL);
    planes
        .into_iter()
        .map(|p| {
            let idx: Vec<usize> = (0..data.test.len())
                .filter(|&i| (data.test.x[i][0] - p).abs() <= DEFAULT_PLANE_TOL)
                .collect();
            let mae = runs
                .iter()
                .map(|r| {
                    let e = idx
                        .iter()
                        .map(|&i| (r.predictions.mean[i] - data.test.y[i]).abs())
                        .sum::<f64>()
                        / idx.len() as f64;
                    (r.kind, e)
                })
                .collect();
            PlaneRow { plane: p, n_points: idx.len(), mae }
        })
        .collect()
}

/// Runs generate, fit, predict and evaluate for every configured model.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.chain.validate()?;
    if cfg.models.is_empty() {
        return Err(Error::InvalidParameter("no models to fit".into()));
    }
    let data = scenario_data(cfg)?;
    let truth = eigen_summary(&build_metric(&cfg.generator().params)?)?;
    let runs = cfg
        .models
        .iter()
        .map(|&k| run_model(cfg, k, &data))
        .collect::<Result<Vec<_>>>()?;
    let rows = runs.iter().map(|r| comparison_row(r, &truth)).collect();
    let planes = (cfg.scenario == Scenario::PlaneHoldout).then(|| plane_rows(&data, &runs));
    Ok(ExperimentReport { config: cfg.clone(), data, truth, runs, rows, planes })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a report's files under `out`:
///
/// ```text
/// data/{train,test}.csv, data/provenance.json
/// <model>/{chain.csv, summary.json, predictions.csv, metrics.json}
/// comparison.{csv,json}, ledger.csv, plane_mae.csv (plane hold-out only)
/// ```
pub fn write_report(report: &ExperimentReport, out: &Path) -> Result<()> {
    let data_dir = out.join("data");
    fs::create_dir_all(&data_dir)?;
    save_csv(&data_dir.join("train.csv"), &report.data.train)?;
    save_csv(&data_dir.join("test.csv"), &report.data.test)?;
    write_json(&data_dir.join("provenance.json"), &report.data.provenance)?;

    let ledger = out.join("ledger.csv");
    if ledger.exists() {
        fs::remove_file(&ledger)?;
    }
    for run in &report.runs {
        let dir = out.join(run.kind.name());
        fs::create_dir_all(&dir)?;
        write_chain_csv(&run.fit.chain, fs::File::create(dir.join("chain.csv"))?)?;
        write_json(&dir.join("summary.json"), &run.fit.summary)?;
        write_predictions(&run.predictions, fs::File::create(dir.join("predictions.csv"))?)?;
        write_json(&dir.join("metrics.json"), &run.metrics)?;
        append_ledger(&ledger, run.kind.name(), &run.metrics)?;
    }

    let mut csv = String::from(COMPARISON_HEADER);
    csv.push('\n');
    for row in &report.rows {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    fs::write(out.join("comparison.csv"), csv)?;
    write_json(&out.join("comparison.json"), &report.rows)?;

    if let Some(planes) = &report.planes {
        let models: Vec<&str> = report.runs.iter().map(|r| r.kind.name()).collect();
        let mut csv = format!("plane_x,n_points,{}\n", models.iter().map(|m| format!("mae_{m}")).collect::<Vec<_>>().join(","));
        for p in planes {
            let maes: Vec<String> = p.mae.iter().map(|(_, v)| v.to_string()).collect();
            csv.push_str(&format!("{},{},{}\n", p.plane, p.n_points, maes.join(",")));
        }
        fs::write(out.join("plane_mae.csv"), csv)?;
        write_json(&out.join("plane_mae.json"), planes)?;
    }
    Ok(())
}
