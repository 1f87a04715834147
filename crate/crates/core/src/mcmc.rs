//! Random-walk Metropolis–Hastings over metric parameters.
//!
//! Proposals are Gaussian perturbations of an unconstrained coordinate
//! vector:
//!
//! | model      | coordinates                     |
//! |------------|---------------------------------|
//! | ARD        | `log ℓ` (3)                     |
//! | rotational | `log ℓ` (3), `a` (3)            |
//! | SPD        | `log d` (3), `o` (3)            |
//! | + noise    | `log σ²` (1), when sampled      |
//!
//! The prior on `ℓ` is Gaussian on the raw length-scales, so moves in `log ℓ`
//! carry the Jacobian `Σ log ℓ′ − Σ log ℓ` in the acceptance ratio. The
//! Cholesky diagonal and the noise variance have priors on the log scale
//! already and need no correction.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::gp::{log_marginal_likelihood, Dataset, GpModel};
use crate::kernel::KernelProfile;
use crate::metric::{build_metric, eigen_summary, AnisotropySummary, MetricKind, MetricParams};
use crate::so3::{exp_so3, geodesic_angle, AxisAngle};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Acceptance rates outside this window flag a run for attention.
pub const ACCEPTANCE_WINDOW: (f64, f64) = (0.05, 0.7);

/// Central credible level used by [`summarize`].
pub const CREDIBLE_LEVEL: f64 = 0.9;

fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

/// Independent Gaussian priors on the raw coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Priors {
    pub length_mean: [f64; 3],
    pub length_sd: [f64; 3],
    /// Isotropic zero-mean prior on the axis–angle vector.
    pub axis_angle_sd: f64,
    /// Prior on each `log d` of the Cholesky-SPD baseline.
    pub spd_log_diag: NormalPrior,
    /// Zero-mean prior on each sub-diagonal entry of the Cholesky factor.
    pub spd_offdiag_sd: f64,
    /// Prior on `log σ²`, used only when the noise is sampled.
    pub log_noise: NormalPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            length_mean: [0.5; 3],
            length_sd: [0.5; 3],
            axis_angle_sd: 1.0,
            // d = 2 matches ℓ = 0.5 on the diagonal.
            spd_log_diag: NormalPrior { mean: std::f64::consts::LN_2, sd: 1.0 },
            spd_offdiag_sd: 5.0,
            log_noise: NormalPrior { mean: (0.05f64 * 0.05).ln(), sd: 1.0 },
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let sds = self
            .length_sd
            .iter()
            .chain([
                &self.axis_angle_sd,
                &self.spd_log_diag.sd,
                &self.spd_offdiag_sd,
                &self.log_noise.sd,
            ]);
        for sd in sds {
            if !(sd.is_finite() && *sd > 0.0) {
                return Err(Error::InvalidParameter(format!("prior sd must be positive, got {sd}")));
            }
        }
        if !self.length_mean.iter().all(|m| m.is_finite() && *m > 0.0) {
            return Err(Error::InvalidParameter("prior length means must be positive".into()));
        }
        Ok(())
    }
}

/// Random-walk standard deviations per coordinate block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ProposalScales {
    /// `log ℓ` steps in the rotational model.
    pub log_length: f64,
    pub axis_angle: f64,
    /// `log ℓ` steps in the ARD model, whose posterior is much wider than the
    /// rotational one when the field is not axis-aligned.
    pub ard_log_length: f64,
    pub spd: f64,
    pub log_noise: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        ProposalScales {
            log_length: 0.03,
            axis_angle: 0.03,
            ard_log_length: 0.06,
            spd: 0.05,
            log_noise: 0.1,
        }
    }
}

impl ProposalScales {
    pub fn validate(&self) -> Result<()> {
        for s in [self.log_length, self.axis_angle, self.ard_log_length, self.spd, self.log_noise] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParameter(format!("proposal scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iters: usize,
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    pub seed: u64,
    /// Update coordinate blocks one after another instead of jointly.
    #[serde(default)]
    pub block_update: bool,
}

fn default_thin() -> usize {
    5
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iters: 20_000,
            burn_in: 10_000,
            thin: 5,
            seed: 0,
            block_update: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || self.thin == 0 || self.burn_in >= self.n_iters {
            return Err(Error::InvalidParameter(format!(
                "need n_iters > burn_in >= 0 and thin > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn expected_samples(&self) -> usize {
        (self.n_iters - self.burn_in) / self.thin
    }
}

/// What is sampled and which fixed settings complete the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub kind: MetricKind,
    #[serde(default)]
    pub profile: KernelProfile,
    /// Fixed noise variance, or the initial value when sampled.
    pub noise_var: f64,
    #[serde(default)]
    pub sample_noise: bool,
}

/// A point in parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub params: MetricParams,
    pub noise_var: f64,
}

impl State {
    pub fn model(&self, profile: KernelProfile) -> GpModel {
        GpModel::new(profile, self.params, self.noise_var)
    }
}

/// Posterior density over [`State`]s.
#[derive(Clone, Debug)]
pub struct Target<'a> {
    pub template: ModelTemplate,
    pub priors: Priors,
    data: Option<&'a Dataset>,
}

impl<'a> Target<'a> {
    pub fn new(data: &'a Dataset, template: ModelTemplate, priors: Priors) -> Self {
        Target { template, priors, data: Some(data) }
    }

    /// A target whose likelihood is constant, so chains sample the prior.
    pub fn prior_only(template: ModelTemplate, priors: Priors) -> Self {
        Target { template, priors, data: None }
    }

    pub fn log_prior(&self, s: &State) -> f64 {
        log_prior(s, &self.priors, self.template.sample_noise)
    }

    pub fn log_likelihood(&self, s: &State) -> f64 {
        match self.data {
            None => 0.0,
            Some(d) => log_marginal_likelihood(&s.model(self.template.profile), d)
                .unwrap_or(f64::NEG_INFINITY),
        }
    }

    /// `log p(y | θ) + log p(θ)`, or `−∞` for invalid or degenerate states.
    pub fn log_posterior(&self, s: &State) -> f64 {
        let lp = self.log_prior(s);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let ll = self.log_likelihood(s);
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp + ll
        }
    }

    /// Prior means with `a = 0`.
    pub fn initial_state(&self) -> State {
        let p = &self.priors;
        let params = match self.template.kind {
            MetricKind::Ard => MetricParams::ard(p.length_mean),
            MetricKind::Rotational => MetricParams::rotational(p.length_mean, [0.0; 3]),
            MetricKind::Spd => MetricParams::spd([p.spd_log_diag.mean.exp(); 3], [0.0; 3]),
        };
        State { params, noise_var: self.template.noise_var }
    }

    fn dim(&self) -> usize {
        let base = match self.template.kind {
            MetricKind::Ard => 3,
            _ => 6,
        };
        base + usize::from(self.template.sample_noise)
    }

    /// Unconstrained coordinates of `s`.
    pub fn encode(&self, s: &State) -> Vec<f64> {
        let v = s.params.values();
        let mut u = match self.template.kind {
            MetricKind::Ard => vec![v[0].ln(), v[1].ln(), v[2].ln()],
            MetricKind::Rotational | MetricKind::Spd => {
                vec![v[0].ln(), v[1].ln(), v[2].ln(), v[3], v[4], v[5]]
            }
        };
        if self.template.sample_noise {
            u.push(s.noise_var.ln());
        }
        u
    }

    pub fn decode(&self, u: &[f64]) -> State {
        let kind = self.template.kind;
        let tail = match kind {
            MetricKind::Ard => [0.0; 3],
            _ => [u[3], u[4], u[5]],
        };
        let params = MetricParams::from_values(
            kind,
            [u[0].exp(), u[1].exp(), u[2].exp(), tail[0], tail[1], tail[2]],
        );
        let noise_var = if self.template.sample_noise {
            u[self.dim() - 1].exp()
        } else {
            self.template.noise_var
        };
        State { params, noise_var }
    }

    /// Log-Jacobian of the map from coordinates to the prior's variables.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        match self.template.kind {
            MetricKind::Ard | MetricKind::Rotational => u[0] + u[1] + u[2],
            MetricKind::Spd => 0.0,
        }
    }

    fn coordinate_scales(&self, scales: &ProposalScales) -> Vec<f64> {
        let mut s = match self.template.kind {
            MetricKind::Ard => vec![scales.ard_log_length; 3],
            MetricKind::Rotational => {
                let mut v = vec![scales.log_length; 3];
                v.extend([scales.axis_angle; 3]);
                v
            }
            MetricKind::Spd => vec![scales.spd; 6],
        };
        if self.template.sample_noise {
            s.push(scales.log_noise);
        }
        s
    }

    /// Coordinate blocks and their names.
    pub fn blocks(&self, block_update: bool) -> Vec<(String, Vec<usize>)> {
        if !block_update {
            return vec![("joint".to_string(), (0..self.dim()).collect())];
        }
        let mut blocks = match self.template.kind {
            MetricKind::Ard => vec![("lengths".to_string(), vec![0, 1, 2])],
            MetricKind::Rotational => vec![
                ("lengths".to_string(), vec![0, 1, 2]),
                ("axis_angle".to_string(), vec![3, 4, 5]),
            ],
            MetricKind::Spd => vec![
                ("spd_diag".to_string(), vec![0, 1, 2]),
                ("spd_offdiag".to_string(), vec![3, 4, 5]),
            ],
        };
        if self.template.sample_noise {
            blocks.push(("noise".to_string(), vec![self.dim() - 1]));
        }
        blocks
    }
}

/// Sum of independent Gaussian log densities on the raw coordinates.
///
/// Returns `−∞` when a positivity constraint is violated.
pub fn log_prior(s: &State, pr: &Priors, sample_noise: bool) -> f64 {
    if s.params.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    let mut lp = match s.params {
        MetricParams::Ard { lengths } => length_log_prior(&lengths, pr),
        MetricParams::Rotational { lengths, axis_angle } => {
            length_log_prior(&lengths, pr)
                + axis_angle
                    .iter()
                    .map(|a| normal_log_density(*a, 0.0, pr.axis_angle_sd))
                    .sum::<f64>()
        }
        MetricParams::Spd { diag, offdiag } => {
            diag.iter()
                .map(|d| normal_log_density(d.ln(), pr.spd_log_diag.mean, pr.spd_log_diag.sd))
                .sum::<f64>()
                + offdiag
                    .iter()
                    .map(|o| normal_log_density(*o, 0.0, pr.spd_offdiag_sd))
                    .sum::<f64>()
        }
    };
    if sample_noise {
        if !(s.noise_var > 0.0 && s.noise_var.is_finite()) {
            return f64::NEG_INFINITY;
        }
        lp += normal_log_density(s.noise_var.ln(), pr.log_noise.mean, pr.log_noise.sd);
    }
    lp
}

fn length_log_prior(lengths: &[f64; 3], pr: &Priors) -> f64 {
    (0..3)
        .map(|j| normal_log_density(lengths[j], pr.length_mean[j], pr.length_sd[j]))
        .sum()
}

/// Metropolis acceptance of a move with log ratio `log_ratio`.
///
/// Moves that do not decrease the target are accepted without consuming a
/// uniform draw.
pub fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Gaussian random-walk perturbation of the listed coordinates.
pub fn propose<R: Rng + ?Sized>(u: &[f64], coords: &[usize], scales: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = u.to_vec();
    for &i in coords {
        let eps: f64 = rng.sample(StandardNormal);
        out[i] += scales[i] * eps;
    }
    out
}

/// Current position of a chain: the state, its unconstrained coordinates and
/// its log posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub state: State,
    pub coords: Vec<f64>,
    pub log_post: f64,
}

impl ChainState {
    pub fn new(target: &Target<'_>, state: State) -> Self {
        ChainState {
            coords: target.encode(&state),
            log_post: target.log_posterior(&state),
            state,
        }
    }
}

/// One Metropolis–Hastings update of the coordinates in `block`.
pub fn mh_step<R: Rng + ?Sized>(
    current: &ChainState,
    target: &Target<'_>,
    scales: &[f64],
    block: &[usize],
    rng: &mut R,
) -> (ChainState, bool) {
    let u = propose(&current.coords, block, scales, rng);
    let state = target.decode(&u);
    let log_post = target.log_posterior(&state);
    let log_ratio = if log_post == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        log_post + target.log_jacobian(&u) - current.log_post - target.log_jacobian(&current.coords)
    };
    if metropolis_accept(log_ratio, rng) {
        (ChainState { state, coords: u, log_post }, true)
    } else {
        (current.clone(), false)
    }
}

/// A stored post-burn-in draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    /// 1-based iteration index.
    pub iter: usize,
    pub log_post: f64,
    pub state: State,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BlockAcceptance {
    pub block: String,
    pub proposed: usize,
    pub accepted: usize,
}

impl BlockAcceptance {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct Chain {
    pub template: ModelTemplate,
    pub config: ChainConfig,
    pub samples: Vec<Sample>,
    pub acceptance: Vec<BlockAcceptance>,
}

impl Chain {
    /// True if any block's acceptance rate leaves [`ACCEPTANCE_WINDOW`].
    pub fn flagged(&self) -> bool {
        self.acceptance
            .iter()
            .any(|b| b.rate() <= ACCEPTANCE_WINDOW.0 || b.rate() >= ACCEPTANCE_WINDOW.1)
    }

    /// Raw coordinate `k` (in [`MetricParams::values`] order) of every sample.
    pub fn trace(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.params.values()[k]).collect()
    }
}

/// Runs a chain from the prior means (with `a = 0`).
pub fn run_chain(cfg: &ChainConfig, target: &Target<'_>, scales: &ProposalScales) -> Result<Chain> {
    run_chain_from(cfg, target, scales, target.initial_state())
}

pub fn run_chain_from(
    cfg: &ChainConfig,
    target: &Target<'_>,
    scales: &ProposalScales,
    init: State,
) -> Result<Chain> {
    cfg.validate()?;
    scales.validate()?;
    target.priors.validate()?;
    let mut current = ChainState::new(target, init);
    if !current.log_post.is_finite() {
        return Err(Error::InitialState(format!("{:?}", init.params)));
    }
    let scale_vec = target.coordinate_scales(scales);
    let blocks = target.blocks(cfg.block_update);
    let mut acceptance: Vec<BlockAcceptance> = blocks
        .iter()
        .map(|(name, _)| BlockAcceptance { block: name.clone(), proposed: 0, accepted: 0 })
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.expected_samples());

    for iter in 1..=cfg.n_iters {
        for (b, (_, coords)) in blocks.iter().enumerate() {
            let (next, accepted) = mh_step(&current, target, &scale_vec, coords, &mut rng);
            acceptance[b].proposed += 1;
            acceptance[b].accepted += usize::from(accepted);
            current = next;
        }
        if iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 {
            samples.push(Sample {
                iter,
                log_post: current.log_post,
                state: current.state,
            });
        }
    }

    Ok(Chain {
        template: target.template,
        config: *cfg,
        samples,
        acceptance,
    })
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ScalarSummary {
    pub fn from_values(name: &str, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - CREDIBLE_LEVEL);
        ScalarSummary {
            name: name.to_string(),
            mean,
            median: quantile_sorted(&sorted, 0.5),
            sd: var.sqrt(),
            lower: quantile_sorted(&sorted, tail),
            upper: quantile_sorted(&sorted, 1.0 - tail),
        }
    }
}

/// Posterior summaries of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PosteriorSummary {
    pub kind: MetricKind,
    pub profile: KernelProfile,
    pub n_samples: usize,
    pub credible_level: f64,
    pub parameters: Vec<ScalarSummary>,
    pub noise_var: ScalarSummary,
    /// Rotation angle `‖log R(a)‖` in degrees (rotational model only).
    pub geodesic_deg: Option<ScalarSummary>,
    /// Metric parameters at the per-coordinate posterior means.
    pub posterior_mean: MetricParams,
    pub posterior_mean_noise_var: f64,
    /// Eigen summary of the metric built from `posterior_mean`.
    pub anisotropy: AnisotropySummary,
    pub acceptance: Vec<BlockAcceptance>,
    pub acceptance_flagged: bool,
    pub seed: u64,
    pub rng: String,
}

impl PosteriorSummary {
    /// The plug-in model at the posterior means.
    pub fn model(&self) -> GpModel {
        GpModel::new(self.profile, self.posterior_mean, self.posterior_mean_noise_var)
    }
}

pub fn summarize(chain: &Chain) -> Result<PosteriorSummary> {
    if chain.samples.is_empty() {
        return Err(Error::InvalidData("chain has no samples".into()));
    }
    let kind = chain.template.kind;
    let names = MetricParams::value_names(kind);
    let used = if kind == MetricKind::Ard { 3 } else { 6 };
    let parameters: Vec<ScalarSummary> = (0..used)
        .map(|k| ScalarSummary::from_values(names[k], &chain.trace(k)))
        .collect();

    let mut means = [0.0; 6];
    for (k, p) in parameters.iter().enumerate() {
        means[k] = p.mean;
    }
    let posterior_mean = MetricParams::from_values(kind, means);

    let noise: Vec<f64> = chain.samples.iter().map(|s| s.state.noise_var).collect();
    let noise_var = ScalarSummary::from_values("noise_var", &noise);

    let geodesic_deg = (kind == MetricKind::Rotational).then(|| {
        let angles: Vec<f64> = chain
            .samples
            .iter()
            .map(|s| {
                let v = s.state.params.values();
                geodesic_angle(&exp_so3(&AxisAngle([v[3], v[4], v[5]]))).to_degrees()
            })
            .collect();
        ScalarSummary::from_values("geodesic_deg", &angles)
    });

    let anisotropy = eigen_summary(&build_metric(&posterior_mean)?)?;
    Ok(PosteriorSummary {
        kind,
        profile: chain.template.profile,
        n_samples: chain.samples.len(),
        credible_level: CREDIBLE_LEVEL,
        parameters,
        posterior_mean_noise_var: noise_var.mean,
        noise_var,
        geodesic_deg,
        posterior_mean,
        anisotropy,
        acceptance: chain.acceptance.clone(),
        acceptance_flagged: chain.flagged(),
        seed: chain.config.seed,
        rng: crate::RNG_NAME.to_string(),
    })
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pairs.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = centred.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0)
}

/// Chain export header for a model.
pub fn chain_header(kind: MetricKind, sample_noise: bool) -> Vec<String> {
    let mut h = vec!["iter".to_string(), "log_post".to_string()];
    h.extend(MetricParams::value_names(kind).iter().map(|s| s.to_string()));
    if sample_noise {
        h.push("noise_var".to_string());
    }
    h
}

/// Writes `iter,log_post,<params>[,noise_var]`, one row per stored sample.
pub fn write_chain_csv<W: Write>(chain: &Chain, mut w: W) -> Result<()> {
    let sample_noise = chain.template.sample_noise;
    writeln!(w, "{}", chain_header(chain.template.kind, sample_noise).join(","))?;
    for s in &chain.samples {
        let mut row = format!("{},{}", s.iter, s.log_post);
        for v in s.state.params.values() {
            row.push(',');
            row.push_str(&v.to_string());
        }
        if sample_noise {
            row.push(',');
            row.push_str(&s.state.noise_var.to_string());
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Reads samples written by [`write_chain_csv`]. `noise_var` supplies the
/// noise variance when the file has no noise column.
pub fn read_chain_csv<R: BufRead>(r: R, kind: MetricKind, noise_var: f64) -> Result<Vec<Sample>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or(Error::Parse { line: 1, message: "empty chain file".into() })??;
    let sample_noise = header.trim_end().ends_with(",noise_var");
    let expected = chain_header(kind, sample_noise).join(",");
    if header.trim_end() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{expected}`, found `{header}`"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i as u64 + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        let want = 8 + usize::from(sample_noise);
        if fields.len() != want {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {want} fields, found {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("`{s}` is not a number"),
            })
        };
        let iter = fields[0].parse::<usize>().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("`{}` is not an iteration index", fields[0]),
        })?;
        let mut v = [0.0; 6];
        for k in 0..6 {
            v[k] = num(fields[2 + k])?;
        }
        out.push(Sample {
            iter,
            log_post: num(fields[1])?,
            state: State {
                params: MetricParams::from_values(kind, v),
                noise_var: if sample_noise { num(fields[8])? } else { noise_var },
            },
        });
    }
    Ok(out)
}
