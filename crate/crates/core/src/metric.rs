//! SPD covariance metrics and coordinate-free anisotropy summaries.
//!
//! Three parameterisations share one metric type:
//!
//! * ARD: `M = diag(ℓ⁻²)`.
//! * Rotational: `M = R(a)ᵀ diag(ℓ⁻²) R(a)`.
//! * Cholesky-SPD: `M = L Lᵀ` with `L` lower triangular, positive diagonal.
//!
//! The likelihood only sees `M`, so parameter states that induce the same
//! matrix are indistinguishable. [`eigen_summary`] reports `M` through its
//! ordered eigenpairs with a fixed sign convention, which is the labelling
//! used everywhere posterior draws are compared.

use nalgebra::SymmetricEigen;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::so3::{exp_so3, geodesic_angle, AxisAngle, Rotation};
use crate::{Error, Mat3, Result, Vec3};

/// Principal length-scales `(ℓx, ℓy, ℓz)`, in input units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LengthScales(pub [f64; 3]);

impl LengthScales {
    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|l| l.is_finite() && *l > 0.0)
    }

    /// `Λ(ℓ) = diag(ℓx⁻², ℓy⁻², ℓz⁻²)`.
    pub fn precision(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::from(self.0.map(|l| 1.0 / (l * l))))
    }
}

/// Which parameterisation a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Ard,
    Rotational,
    Spd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Rotational, MetricKind::Spd, MetricKind::Ard];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Ard => "ard",
            MetricKind::Rotational => "rotational",
            MetricKind::Spd => "spd",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ard" => Ok(MetricKind::Ard),
            "rotational" => Ok(MetricKind::Rotational),
            "spd" => Ok(MetricKind::Spd),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

/// Parameters of the metric, one variant per parameterisation.
///
/// Values are stored raw; [`build_metric`] validates them. The Cholesky
/// off-diagonal entries are ordered `L[1][0], L[2][0], L[2][1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MetricParams {
    Ard {
        lengths: [f64; 3],
    },
    Rotational {
        lengths: [f64; 3],
        axis_angle: [f64; 3],
    },
    Spd {
        diag: [f64; 3],
        offdiag: [f64; 3],
    },
}

impl MetricParams {
    pub fn kind(&self) -> MetricKind {
        match self {
            MetricParams::Ard { .. } => MetricKind::Ard,
            MetricParams::Rotational { .. } => MetricKind::Rotational,
            MetricParams::Spd { .. } => MetricKind::Spd,
        }
    }

    pub fn rotational(lengths: [f64; 3], axis_angle: [f64; 3]) -> Self {
        MetricParams::Rotational { lengths, axis_angle }
    }

    pub fn ard(lengths: [f64; 3]) -> Self {
        MetricParams::Ard { lengths }
    }

    pub fn spd(diag: [f64; 3], offdiag: [f64; 3]) -> Self {
        MetricParams::Spd { diag, offdiag }
    }

    /// The rotation implied by the parameters (identity for ARD, `None` for SPD).
    pub fn rotation(&self) -> Option<Rotation> {
        match self {
            MetricParams::Ard { .. } => Some(Rotation::identity()),
            MetricParams::Rotational { axis_angle, .. } => Some(exp_so3(&AxisAngle(*axis_angle))),
            MetricParams::Spd { .. } => None,
        }
    }

    /// Flattened raw coordinates in chain-export column order.
    pub fn values(&self) -> [f64; 6] {
        match *self {
            MetricParams::Ard { lengths } => [lengths[0], lengths[1], lengths[2], 0.0, 0.0, 0.0],
            MetricParams::Rotational { lengths, axis_angle } => [
                lengths[0],
                lengths[1],
                lengths[2],
                axis_angle[0],
                axis_angle[1],
                axis_angle[2],
            ],
            MetricParams::Spd { diag, offdiag } => {
                [diag[0], diag[1], diag[2], offdiag[0], offdiag[1], offdiag[2]]
            }
        }
    }

    /// Inverse of [`MetricParams::values`].
    pub fn from_values(kind: MetricKind, v: [f64; 6]) -> Self {
        let head = [v[0], v[1], v[2]];
        let tail = [v[3], v[4], v[5]];
        match kind {
            MetricKind::Ard => MetricParams::Ard { lengths: head },
            MetricKind::Rotational => MetricParams::Rotational {
                lengths: head,
                axis_angle: tail,
            },
            MetricKind::Spd => MetricParams::Spd {
                diag: head,
                offdiag: tail,
            },
        }
    }

    /// Column names matching [`MetricParams::values`].
    pub fn value_names(kind: MetricKind) -> [&'static str; 6] {
        match kind {
            MetricKind::Ard | MetricKind::Rotational => ["l_x", "l_y", "l_z", "a_1", "a_2", "a_3"],
            MetricKind::Spd => ["d_1", "d_2", "d_3", "o_1", "o_2", "o_3"],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
        let positive = |v: &[f64; 3]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        match self {
            MetricParams::Ard { lengths } if !positive(lengths) => Err(Error::InvalidParameter(
                format!("length-scales must be positive and finite, got {lengths:?}"),
            )),
            MetricParams::Rotational { lengths, .. } if !positive(lengths) => {
                Err(Error::InvalidParameter(format!(
                    "length-scales must be positive and finite, got {lengths:?}"
                )))
            }
            MetricParams::Rotational { axis_angle, .. } if !finite(axis_angle) => Err(
                Error::InvalidParameter(format!("axis-angle must be finite, got {axis_angle:?}")),
            ),
            MetricParams::Spd { diag, .. } if !positive(diag) => Err(Error::InvalidParameter(
                format!("cholesky diagonal must be positive and finite, got {diag:?}"),
            )),
            MetricParams::Spd { offdiag, .. } if !finite(offdiag) => Err(Error::InvalidParameter(
                format!("cholesky off-diagonal must be finite, got {offdiag:?}"),
            )),
            _ => Ok(()),
        }
    }
}

/// A symmetric positive definite 3×3 metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdMetric(Mat3);

impl SpdMetric {
    /// Checks symmetry (to 1e-12 relative) and positive definiteness.
    pub fn new(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NotSpd("non-finite entry".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotSpd("matrix is not symmetric".into()));
        }
        if m.cholesky().is_none() {
            return Err(Error::NotSpd("cholesky of metric failed".into()));
        }
        Ok(SpdMetric(m))
    }

    pub fn identity() -> Self {
        SpdMetric(Mat3::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }
}

/// `Σᵢ λᵢ qᵢ qᵢᵀ` ordered by descending eigenvalue (ascending range).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AnisotropySummary {
    /// Principal correlation ranges `λ^(−1/2)`, shortest first.
    pub ranges: [f64; 3],
    /// Unit principal directions matching `ranges`.
    pub directions: [[f64; 3]; 3],
    /// Metric eigenvalues, largest first.
    pub eigenvalues: [f64; 3],
    /// Rotation angle of the (det-corrected) eigenvector frame from the
    /// identity, in degrees.
    pub geodesic_deg: f64,
}

impl AnisotropySummary {
    pub fn direction(&self, i: usize) -> Vec3 {
        Vec3::from(self.directions[i])
    }

    /// Reassembles `Σᵢ λᵢ qᵢ qᵢᵀ`.
    pub fn reconstruct(&self) -> Mat3 {
        (0..3).fold(Mat3::zeros(), |acc, i| {
            let q = self.direction(i);
            acc + q * q.transpose() * self.eigenvalues[i]
        })
    }
}

/// Builds the metric induced by `p`, symmetrised as `(M + Mᵀ)/2`.
///
/// Fails on non-finite or non-positive required fields; callers running a
/// sampler treat that as a rejected proposal.
pub fn build_metric(p: &MetricParams) -> Result<SpdMetric> {
    p.validate()?;
    let m = match *p {
        MetricParams::Ard { lengths } => LengthScales(lengths).precision(),
        MetricParams::Rotational { lengths, axis_angle } => {
            let r = *exp_so3(&AxisAngle(axis_angle)).matrix();
            r.transpose() * LengthScales(lengths).precision() * r
        }
        MetricParams::Spd { diag, offdiag } => {
            let l = cholesky_factor(diag, offdiag);
            l * l.transpose()
        }
    };
    SpdMetric::new((m + m.transpose()) * 0.5)
}

/// Lower-triangular `L` with diagonal `d` and sub-diagonal `(L10, L20, L21)`.
pub fn cholesky_factor(d: [f64; 3], o: [f64; 3]) -> Mat3 {
    Mat3::new(
        d[0], 0.0, 0.0, //
        o[0], d[1], 0.0, //
        o[1], o[2], d[2],
    )
}

/// Flips `v` so that its largest-magnitude component is non-negative
/// (ties go to the lowest index).
fn fix_sign(v: Vec3) -> Vec3 {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

/// Symmetric eigendecomposition reported as ordered ranges and sign-fixed
/// principal directions.
pub fn eigen_summary(m: &SpdMetric) -> Result<AnisotropySummary> {
    let eig = SymmetricEigen::try_new(*m.matrix(), f64::EPSILON, 1000)
        .ok_or(Error::EigenNoConvergence)?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut eigenvalues = [0.0; 3];
    let mut ranges = [0.0; 3];
    let mut directions = [[0.0; 3]; 3];
    let mut frame = Mat3::zeros();
    for (slot, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 0.0) {
            return Err(Error::NotSpd(format!("eigenvalue {lambda:e} is not positive")));
        }
        let q = fix_sign(eig.eigenvectors.column(k).normalize());
        eigenvalues[slot] = lambda;
        ranges[slot] = lambda.sqrt().recip();
        directions[slot] = [q[0], q[1], q[2]];
        frame.set_column(slot, &q);
    }

    if frame.determinant() < 0.0 {
        let last = -frame.column(2).into_owned();
        frame.set_column(2, &last);
    }
    // The orthonormal frame is a rotation up to round-off; the trace formula
    // does not need exact orthogonality.
    let rotation = Rotation::from_matrix(frame, 1e-6).unwrap_or_else(Rotation::identity);
    Ok(AnisotropySummary {
        ranges,
        directions,
        eigenvalues,
        geodesic_deg: geodesic_angle(&rotation).to_degrees(),
    })
}

/// Per-axis angles `arccos |q̂ᵢᵀ qᵢ|` between same-rank directions, in degrees.
pub fn misalignment_angles(est: &AnisotropySummary, truth: &AnisotropySummary) -> [f64; 3] {
    std::array::from_fn(|i| {
        let c = est.direction(i).dot(&truth.direction(i)).abs();
        c.min(1.0).acos().to_degrees()
    })
}
