//! Synthetic data, CSV input/output, standardisation and plane hold-out
//! splits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::gp::{Dataset, GpModel, PredictiveResult};
use crate::kernel::KernelProfile;
use crate::metric::MetricParams;
use crate::{Error, Result, Vec3};

pub const DATASET_HEADER: [&str; 4] = ["x", "y", "z", "value"];
pub const PREDICTION_HEADER: [&str; 6] = ["x", "y", "z", "truth", "mean", "sd"];

/// Default coordinate snapping tolerance for gridded data.
pub const DEFAULT_PLANE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Inputs are uniform on `[−half_width, half_width]³`.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    pub generator: GpModel,
    pub seed: u64,
}

fn default_half_width() -> f64 {
    1.0
}

impl SyntheticConfig {
    /// Rotated field: `ℓ = (0.40, 0.10, 0.80)`, `a = (0.7, −0.4, 1.0)`,
    /// noise sd 0.05.
    pub fn d1(n_train: usize, n_test: usize, seed: u64) -> Self {
        SyntheticConfig {
            n_train,
            n_test,
            half_width: 1.0,
            generator: GpModel::new(
                KernelProfile::SquaredExponential,
                MetricParams::rotational([0.40, 0.10, 0.80], [0.7, -0.4, 1.0]),
                0.05 * 0.05,
            ),
            seed,
        }
    }

    /// Axis-aligned field: ARD with `ℓ = (1.00, 0.25, 0.37)`, noise sd 0.05.
    pub fn d2(n_train: usize, n_test: usize, seed: u64) -> Self {
        SyntheticConfig {
            n_train,
            n_test,
            half_width: 1.0,
            generator: GpModel::new(
                KernelProfile::SquaredExponential,
                MetricParams::ard([1.00, 0.25, 0.37]),
                0.05 * 0.05,
            ),
            seed,
        }
    }

    /// Named presets at their full sizes (1000 train, 500 test).
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "d1" => Some(Self::d1(1000, 500, seed)),
            "d2" => Some(Self::d2(1000, 500, seed)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train + self.n_test < 2 || self.n_train == 0 {
            return Err(Error::InvalidParameter(format!(
                "need n_train ≥ 1 and n_train + n_test ≥ 2, got {} + {}",
                self.n_train, self.n_test
            )));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "half_width must be positive, got {}",
                self.half_width
            )));
        }
        if !(self.generator.noise_var.is_finite() && self.generator.noise_var >= 0.0) {
            return Err(Error::InvalidParameter("generator noise variance must be ≥ 0".into()));
        }
        self.generator.params.validate()
    }
}

/// Where a split came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Provenance {
    pub source: String,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    /// The generating or splitting configuration.
    pub config: serde_json::Value,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub excluded_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub provenance: Provenance,
}

/// `n` i.i.d. points uniform on `[−h, h]³`.
pub fn uniform_cube<R: Rng + ?Sized>(n: usize, h: f64, rng: &mut R) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-h..=h),
                rng.random_range(-h..=h),
                rng.random_range(-h..=h),
            )
        })
        .collect()
}

/// One joint draw `y ∼ N(0, K + σ²I)` at `x` via the Cholesky factor.
pub fn sample_outputs<R: Rng + ?Sized>(model: &GpModel, x: &[Vec3], rng: &mut R) -> Result<Vec<f64>> {
    let g = model.gram(x)?;
    let z = nalgebra::DVector::from_iterator(x.len(), (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let y = g.factor().l_dirty().lower_triangle() * z;
    Ok(y.iter().copied().collect())
}

/// Draws inputs, then the joint output vector, then splits by a random
/// permutation.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SplitDataset> {
    cfg.validate()?;
    let n = cfg.n_train + cfg.n_test;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let x = uniform_cube(n, cfg.half_width, &mut rng);
    let y = sample_outputs(&cfg.generator, &x, &mut rng)?;
    let all = Dataset::new(x, y)?;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let (train_idx, test_idx) = perm.split_at(cfg.n_train);
    Ok(SplitDataset {
        train: all.subset(train_idx),
        test: all.subset(test_idx),
        provenance: Provenance {
            source: "synthetic".into(),
            seed: Some(cfg.seed),
            rng: Some(crate::RNG_NAME.into()),
            config: serde_json::to_value(cfg)?,
            train_indices: train_idx.to_vec(),
            test_indices: test_idx.to_vec(),
            excluded_indices: vec![],
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::InvalidParameter(format!("unknown axis `{s}`"))),
        }
    }
}

/// Splits off every point lying on one of the `test_values` planes.
///
/// Points on `exclude_values` planes go to neither side.
pub fn holdout_planes(
    d: &Dataset,
    axis: Axis,
    test_values: &[f64],
    exclude_values: &[f64],
    tol: f64,
) -> Result<SplitDataset> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("plane tolerance must be positive, got {tol}")));
    }
    let k = axis.index();
    let on = |v: f64, planes: &[f64]| planes.iter().any(|p| (v - p).abs() <= tol);
    let (mut train, mut test, mut excluded) = (vec![], vec![], vec![]);
    for (i, x) in d.x.iter().enumerate() {
        if on(x[k], test_values) {
            test.push(i);
        } else if on(x[k], exclude_values) {
            excluded.push(i);
        } else {
            train.push(i);
        }
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("no points on the held-out planes".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptySplit("no training points remain".into()));
    }
    Ok(SplitDataset {
        train: d.subset(&train),
        test: d.subset(&test),
        provenance: Provenance {
            source: "plane-holdout".into(),
            seed: None,
            rng: None,
            config: serde_json::json!({
                "axis": axis,
                "test_values": test_values,
                "exclude_values": exclude_values,
                "tol": tol,
            }),
            train_indices: train,
            test_indices: test,
            excluded_indices: excluded,
        },
    })
}

/// Centres the outputs and scales them to unit sample sd (divisor `n − 1`).
pub fn standardize(d: &Dataset) -> Result<(Dataset, f64, f64)> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidData("standardisation needs at least two points".into()));
    }
    let mean = d.y.iter().sum::<f64>() / n as f64;
    let var = d.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidData("outputs have zero variance".into()));
    }
    let y = d.y.iter().map(|v| (v - mean) / sd).collect();
    Ok((Dataset { x: d.x.clone(), y }, mean, sd))
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Cartesian product of per-axis levels, `x` varying slowest.
pub fn grid_points(xs: &[f64], ys: &[f64], zs: &[f64]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &x in xs {
        for &y in ys {
            for &z in zs {
                out.push(Vec3::new(x, y, z));
            }
        }
    }
    out
}

fn parse_field(s: &str, line: u64) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("`{s}` is not a number"),
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r)
}

/// Parses a dataset from CSV text with header `x,y,z,value`.
pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::InvalidData("empty dataset file".into())),
        Some(h) => h?,
    };
    if header.iter().map(str::trim).ne(DATASET_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", DATASET_HEADER.join(",")),
        });
    }
    let (mut x, mut y) = (vec![], vec![]);
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 columns, found {}", rec.len()),
            });
        }
        let v: Vec<f64> = rec.iter().map(|s| parse_field(s, line)).collect::<Result<_>>()?;
        x.push(Vec3::new(v[0], v[1], v[2]));
        y.push(v[3]);
    }
    if y.is_empty() {
        return Err(Error::InvalidData("dataset file has no rows".into()));
    }
    Dataset::new(x, y)
}

pub fn write_dataset<W: Write>(d: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(DATASET_HEADER)?;
    for (x, y) in d.x.iter().zip(&d.y) {
        wtr.write_record([x[0].to_string(), x[1].to_string(), x[2].to_string(), y.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

pub fn save_csv(path: &Path, d: &Dataset) -> Result<()> {
    write_dataset(d, File::create(path)?)
}

/// Predictive means and sds at test inputs, with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTable {
    pub x: Vec<Vec3>,
    pub truth: Option<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl PredictionTable {
    pub fn new(x: Vec<Vec3>, truth: Option<Vec<f64>>, pred: &PredictiveResult) -> Self {
        PredictionTable {
            x,
            truth,
            mean: pred.mean.clone(),
            sd: pred.sd(),
        }
    }

    pub fn predictive(&self) -> PredictiveResult {
        PredictiveResult {
            mean: self.mean.clone(),
            var: self.sd.iter().map(|s| s * s).collect(),
        }
    }
}

/// Writes `x,y,z,truth,mean,sd`, leaving out `truth` when absent.
pub fn write_predictions<W: Write>(p: &PredictionTable, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let header: Vec<&str> = PREDICTION_HEADER
        .iter()
        .copied()
        .filter(|h| p.truth.is_some() || *h != "truth")
        .collect();
    wtr.write_record(&header)?;
    for i in 0..p.x.len() {
        let mut row = vec![p.x[i][0].to_string(), p.x[i][1].to_string(), p.x[i][2].to_string()];
        if let Some(t) = &p.truth {
            row.push(t[i].to_string());
        }
        row.push(p.mean[i].to_string());
        row.push(p.sd[i].to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(r: R) -> Result<PredictionTable> {
    let mut rdr = reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::InvalidData("empty predictions file".into())),
        Some(h) => h?,
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let has_truth = if cols == PREDICTION_HEADER {
        true
    } else if cols == ["x", "y", "z", "mean", "sd"] {
        false
    } else {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}` (truth optional)", PREDICTION_HEADER.join(",")),
        });
    };
    let mut t = PredictionTable {
        x: vec![],
        truth: has_truth.then(Vec::new),
        mean: vec![],
        sd: vec![],
    };
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", cols.len(), rec.len()),
            });
        }
        let v: Vec<f64> = rec.iter().map(|s| parse_field(s, line)).collect::<Result<_>>()?;
        t.x.push(Vec3::new(v[0], v[1], v[2]));
        let rest = if let Some(truth) = t.truth.as_mut() {
            truth.push(v[3]);
            &v[4..]
        } else {
            &v[3..]
        };
        t.mean.push(rest[0]);
        t.sd.push(rest[1]);
    }
    Ok(t)
}
