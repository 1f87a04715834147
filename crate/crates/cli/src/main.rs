//! `rotgp`: generate synthetic fields, fit metric models by MCMC, predict,
//! evaluate, and run the comparison scenarios.
//!
//! Exit status is 0 on success, 1 when a computation fails and 2 for usage,
//! configuration or file errors.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rotgp_core::data::{
    generate_synthetic, load_csv, read_predictions, save_csv, write_predictions, PredictionTable, SyntheticConfig,
};
use rotgp_core::eval::{append_ledger, compute_metrics};
use rotgp_core::experiment::{fit, predict_mixture, predict_plugin, run_experiment, write_report, ExperimentConfig, Scenario};
use rotgp_core::mcmc::{read_chain_csv, write_chain_csv, PosteriorSummary};
use rotgp_core::metric::MetricKind;

use config::{EvaluateRun, FitRun, PredictRun};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] rotgp_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use rotgp_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::NotSpd(_) | E::JitterCapExceeded { .. } | E::EigenNoConvergence | E::InitialState(_) => 1,
                _ => 2,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("invalid configuration: {e}"))
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "rotgp", version, about = "Gaussian-process regression with rotated anisotropic metrics")]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Built-in configuration: `d1` or `d2` for generate, a scenario name for
    /// experiment.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset and split it into train and test sets.
    Generate(GenerateArgs),
    /// Run an MCMC chain on a training set.
    Fit(FitArgs),
    /// Predict at test inputs from a fitted summary or chain.
    Predict(PredictArgs),
    /// Compute accuracy and calibration metrics from a predictions file.
    Evaluate(EvaluateArgs),
    /// Generate, fit every model, predict and evaluate in one go.
    Experiment(ExperimentArgs),
    /// Write the JSON schemas of every configuration document.
    Schema,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training CSV (`x,y,z,value`).
    #[arg(long)]
    train: Option<PathBuf>,
    /// ard, rotational or spd.
    #[arg(long)]
    model: Option<MetricKind>,
    /// Sample `log σ²` as an extra block instead of holding the noise fixed.
    #[arg(long)]
    sample_noise: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test CSV; its `value` column becomes the `truth` column.
    #[arg(long)]
    test: Option<PathBuf>,
    /// `summary.json` written by `fit`.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// `chain.csv` written by `fit`, needed for mixture predictions.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Average predictive distributions over the stored samples instead of
    /// plugging in the posterior means.
    #[arg(long)]
    posterior_mean_of_predictions: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Predictions CSV with a `truth` column.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Ledger CSV to append to (default `<out>/ledger.csv`).
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Row label in the ledger.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// d1, d2 or plane-holdout.
    #[arg(long)]
    scenario: Option<Scenario>,
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    // Probe writability before any computation starts.
    let probe = dir.join(".rotgp-write-test");
    fs::write(&probe, b"").map_err(|e| CliError::Usage(format!("cannot write to {}: {e}", dir.display())))?;
    fs::remove_file(&probe)?;
    Ok(())
}

fn require<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing {what} (flag or config field)")))
}

fn input(path: &Path) -> Result<rotgp_core::gp::Dataset> {
    if !path.exists() {
        return Err(CliError::Usage(format!("input file {} does not exist", path.display())));
    }
    Ok(load_csv(path)?)
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --preset, not both".into())),
        (Some(path), None) => read_config(path)?,
        (None, Some(name)) => SyntheticConfig::preset(name, 0)
            .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}` (expected d1 or d2)")))?,
        (None, None) => return Err(CliError::Usage("generate needs --config or --preset".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = args.n_test {
        cfg.n_test = n;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    create_out(&cli.out)?;
    write_json(&cli.out.join("resolved-config.json"), &cfg)?;
    let split = generate_synthetic(&cfg)?;
    save_csv(&cli.out.join("train.csv"), &split.train)?;
    save_csv(&cli.out.join("test.csv"), &split.test)?;
    write_json(&cli.out.join("provenance.json"), &split.provenance)?;
    Ok(())
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let mut run: FitRun = match &cli.config {
        Some(path) => read_config(path)?,
        None => FitRun::new(require(args.train.clone(), "--train")?, require(args.model, "--model")?),
    };
    if let Some(t) = &args.train {
        run.train = t.clone();
    }
    if let Some(m) = args.model {
        run.fit.template.kind = m;
    }
    if args.sample_noise {
        run.fit.template.sample_noise = true;
    }
    if let Some(s) = cli.seed {
        run.fit.chain.seed = s;
    }
    run.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let train = input(&run.train)?;
    create_out(&cli.out)?;
    write_json(&cli.out.join("resolved-config.json"), &run)?;
    let result = fit(&train, &run.fit)?;
    write_chain_csv(&result.chain, fs::File::create(cli.out.join("chain.csv"))?)?;
    write_json(&cli.out.join("summary.json"), &result.summary)?;
    if result.summary.acceptance_flagged {
        eprintln!("warning: acceptance rate outside (0.05, 0.7); see summary.json");
    }
    Ok(())
}

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let mut run: PredictRun = match &cli.config {
        Some(path) => read_config(path)?,
        None => PredictRun::new(require(args.train.clone(), "--train")?, require(args.test.clone(), "--test")?),
    };
    if let Some(p) = &args.train {
        run.train = p.clone();
    }
    if let Some(p) = &args.test {
        run.test = p.clone();
    }
    if args.summary.is_some() {
        run.summary = args.summary.clone();
    }
    if args.chain.is_some() {
        run.chain = args.chain.clone();
    }
    run.posterior_mean_of_predictions |= args.posterior_mean_of_predictions;

    let summary: PosteriorSummary = read_config(&require(run.summary.clone(), "--summary")?)?;
    let chain_path = if run.posterior_mean_of_predictions {
        let p = require(run.chain.clone(), "--chain (needed for mixture predictions)")?;
        if !p.exists() {
            return Err(CliError::Usage(format!("chain file {} does not exist", p.display())));
        }
        Some(p)
    } else {
        None
    };
    let train = input(&run.train)?;
    let test = input(&run.test)?;
    create_out(&cli.out)?;
    write_json(&cli.out.join("resolved-config.json"), &run)?;

    let pred = match chain_path {
        Some(p) => {
            let file = std::io::BufReader::new(fs::File::open(p)?);
            let samples = read_chain_csv(file, summary.kind, summary.posterior_mean_noise_var)?;
            predict_mixture(&samples, summary.profile, &train, &test.x)?
        }
        None => predict_plugin(&summary.model(), &train, &test.x)?,
    };
    let table = PredictionTable::new(test.x.clone(), Some(test.y.clone()), &pred);
    write_predictions(&table, fs::File::create(cli.out.join("predictions.csv"))?)?;
    Ok(())
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let mut run: EvaluateRun = match &cli.config {
        Some(path) => read_config(path)?,
        None => EvaluateRun::new(require(args.predictions.clone(), "--predictions")?),
    };
    if let Some(p) = &args.predictions {
        run.predictions = p.clone();
    }
    if args.ledger.is_some() {
        run.ledger = args.ledger.clone();
    }
    if args.label.is_some() {
        run.label = args.label.clone();
    }
    if !run.predictions.exists() {
        return Err(CliError::Usage(format!("predictions file {} does not exist", run.predictions.display())));
    }
    let table = read_predictions(fs::File::open(&run.predictions)?)?;
    let truth = table
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Usage("predictions file has no truth column".into()))?;
    let metrics = compute_metrics(&table.predictive(), truth)?;
    create_out(&cli.out)?;
    write_json(&cli.out.join("resolved-config.json"), &run)?;
    write_json(&cli.out.join("metrics.json"), &metrics)?;
    let ledger = run.ledger.clone().unwrap_or_else(|| cli.out.join("ledger.csv"));
    let label = run.label.clone().unwrap_or_else(|| run.predictions.display().to_string());
    append_ledger(&ledger, &label, &metrics)?;
    Ok(())
}

fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let preset = cli
        .preset
        .as_deref()
        .map(|p| p.parse::<Scenario>().map_err(|e| CliError::Usage(e.to_string())))
        .transpose()?;
    let mut cfg: ExperimentConfig = match &cli.config {
        Some(path) => read_config(path)?,
        None => {
            let scenario = require(args.scenario.or(preset), "--scenario")?;
            ExperimentConfig::new(scenario, 0)
        }
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.chain.seed = s;
    }
    cfg.chain.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    create_out(&cli.out)?;
    write_json(&cli.out.join("resolved-config.json"), &cfg)?;
    let marker = cli.out.join("FAILED");
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let outcome = run_experiment(&cfg).and_then(|report| write_report(&report, &cli.out));
    if let Err(e) = &outcome {
        fs::write(&marker, format!("{e}\n"))?;
    }
    Ok(outcome?)
}

fn cmd_schema(cli: &Cli) -> Result<()> {
    create_out(&cli.out)?;
    for (name, schema) in config::schemas() {
        write_json(&cli.out.join(format!("{name}.schema.json")), &schema)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(cli, a),
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Predict(a) => cmd_predict(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Experiment(a) => cmd_experiment(cli, a),
        Command::Schema => cmd_schema(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
