//! Radial profiles applied to the squared rotated distance, and Gram
//! assembly with adaptive diagonal jitter.
//!
//! Kernels carry unit signal amplitude: `k(x, x) = 1`. Outputs are expected
//! to be standardised before fitting.

use nalgebra::{Cholesky, DMatrix, Dyn};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::metric::SpdMetric;
use crate::{Error, Result, Vec3};

/// Largest diagonal jitter tried before a Gram matrix is declared degenerate.
pub const JITTER_CAP: f64 = 1e-4;
/// First jitter rung, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-12;

/// Half-integer Matérn smoothness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum MaternNu {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelProfile {
    #[default]
    SquaredExponential,
    Matern {
        nu: MaternNu,
    },
}

/// `ψ(x, x′) = (x − x′)ᵀ M (x − x′)`.
#[inline]
pub fn sq_rotated_distance(m: &SpdMetric, x: &Vec3, x2: &Vec3) -> f64 {
    let d = x - x2;
    let m = m.matrix();
    let psi = m[(0, 0)] * d[0] * d[0]
        + m[(1, 1)] * d[1] * d[1]
        + m[(2, 2)] * d[2] * d[2]
        + 2.0 * (m[(0, 1)] * d[0] * d[1] + m[(0, 2)] * d[0] * d[2] + m[(1, 2)] * d[1] * d[2]);
    psi.max(0.0)
}

/// Profile `κ(ψ)` with `κ(0) = 1`.
#[inline]
pub fn radial_profile(p: KernelProfile, psi: f64) -> f64 {
    match p {
        KernelProfile::SquaredExponential => (-0.5 * psi).exp(),
        KernelProfile::Matern { nu } => {
            if psi == 0.0 {
                return 1.0;
            }
            let r = (2.0 * nu.value() * psi).sqrt();
            let decay = (-r).exp();
            match nu {
                MaternNu::Half => decay,
                MaternNu::ThreeHalves => (1.0 + r) * decay,
                MaternNu::FiveHalves => (1.0 + r + r * r / 3.0) * decay,
            }
        }
    }
}

/// Kernel evaluation `κ(ψ(x, x′))`.
#[inline]
pub fn kernel(p: KernelProfile, m: &SpdMetric, x: &Vec3, x2: &Vec3) -> f64 {
    radial_profile(p, sq_rotated_distance(m, x, x2))
}

/// A factorised training covariance `K + (noise + jitter) I`.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    jitter_used: f64,
}

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// `log det K = 2 Σ log Cᵢᵢ`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.l_dirty().diagonal().iter().map(|c| c.ln()).sum::<f64>()
    }
}

/// Kernel matrix over `x` without noise or jitter.
pub fn kernel_matrix(p: KernelProfile, m: &SpdMetric, x: &[Vec3]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0;
        for i in j + 1..n {
            let v = kernel(p, m, &x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Adds `noise_var` to the diagonal of a kernel matrix and factorises it,
/// escalating jitter from `1e-12 · mean(diag)` by factors of ten up to
/// [`JITTER_CAP`].
pub fn factorize(mut k: DMatrix<f64>, noise_var: f64) -> Result<GramMatrix> {
    let n = k.nrows();
    if n == 0 {
        return Err(Error::InvalidData("gram matrix needs at least one input".into()));
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise variance {noise_var}")));
    }
    for i in 0..n {
        k[(i, i)] += noise_var;
    }
    if let Some(factor) = Cholesky::new(k.clone()) {
        return Ok(GramMatrix {
            matrix: k,
            factor,
            jitter_used: 0.0,
        });
    }
    let mean_diag = k.diagonal().mean();
    let mut jitter = JITTER_START * mean_diag;
    loop {
        let capped = jitter.min(JITTER_CAP);
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += capped;
        }
        if let Some(factor) = Cholesky::new(kj.clone()) {
            return Ok(GramMatrix {
                matrix: kj,
                factor,
                jitter_used: capped,
            });
        }
        if capped >= JITTER_CAP {
            return Err(Error::JitterCapExceeded { cap: JITTER_CAP });
        }
        jitter *= 10.0;
    }
}

/// Training covariance with `noise_var` and adaptive jitter on the diagonal.
pub fn gram(p: KernelProfile, m: &SpdMetric, x: &[Vec3], noise_var: f64) -> Result<GramMatrix> {
    if let Some(bad) = x.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidData(format!("input row {bad} is not finite")));
    }
    factorize(kernel_matrix(p, m, x), noise_var)
}

/// Cross-covariance `K*[i][j] = κ(ψ(x*ᵢ, xⱼ))`, without noise or jitter.
pub fn cross_gram(p: KernelProfile, m: &SpdMetric, x_test: &[Vec3], x_train: &[Vec3]) -> DMatrix<f64> {
    DMatrix::from_fn(x_test.len(), x_train.len(), |i, j| kernel(p, m, &x_test[i], &x_train[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{build_metric, MetricParams};
    use crate::so3::{exp_so3, AxisAngle};
    use crate::Mat3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const PROFILES: [KernelProfile; 4] = [
        KernelProfile::SquaredExponential,
        KernelProfile::Matern { nu: MaternNu::Half },
        KernelProfile::Matern { nu: MaternNu::ThreeHalves },
        KernelProfile::Matern { nu: MaternNu::FiveHalves },
    ];

    fn m_true() -> SpdMetric {
        build_metric(&MetricParams::rotational([0.4, 0.1, 0.8], [0.7, -0.4, 1.0])).unwrap()
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// `K_ν(z) = ∫₀^∞ exp(−z cosh t) cosh(νt) dt` by the trapezoid rule.
    fn bessel_k(nu: f64, z: f64) -> f64 {
        let h = 1e-4;
        let steps = (30.0 / h) as usize;
        let f = |t: f64| (-z * t.cosh()).exp() * (nu * t).cosh();
        let mut sum = 0.5 * f(0.0);
        for i in 1..steps {
            sum += f(i as f64 * h);
        }
        sum * h
    }

    /// Closed-form Γ at the half-integers in use.
    fn gamma_half_integer(nu: f64) -> f64 {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        match nu {
            0.5 => sqrt_pi,
            1.5 => 0.5 * sqrt_pi,
            2.5 => 0.75 * sqrt_pi,
            _ => unreachable!(),
        }
    }

    fn matern_bessel_form(nu: f64, psi: f64) -> f64 {
        let r = (2.0 * nu * psi).sqrt();
        r.powf(nu) * bessel_k(nu, r) / (2f64.powf(nu - 1.0) * gamma_half_integer(nu))
    }

    #[test]
    fn distance_examples() {
        let x = Vec3::new(0.3, -0.2, 0.9);
        assert_eq!(sq_rotated_distance(&m_true(), &x, &x), 0.0);
        let id = SpdMetric::identity();
        let d = sq_rotated_distance(&id, &Vec3::new(1.0, 2.0, 2.0), &Vec3::zeros());
        assert!((d - 9.0).abs() < 1e-15);
    }

    #[test]
    fn distance_matches_transform_then_norm() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let r = *exp_so3(&AxisAngle::new(0.7, -0.4, 1.0)).matrix();
        let half = Mat3::from_diagonal(&Vec3::new(1.0 / 0.4, 1.0 / 0.1, 1.0 / 0.8));
        for _ in 0..100 {
            let p = random_points(&mut rng, 2);
            let oracle = (half * r * (p[0] - p[1])).norm_squared();
            let got = sq_rotated_distance(&m_true(), &p[0], &p[1]);
            assert!((got - oracle).abs() < 1e-12 * oracle.max(1.0));
        }
    }

    #[test]
    fn profile_values() {
        let se = KernelProfile::SquaredExponential;
        assert_eq!(radial_profile(se, 0.0), 1.0);
        assert!((radial_profile(se, 2.0) - (-1.0f64).exp()).abs() < 1e-16);
        assert!((radial_profile(se, 2.0) - 0.367879).abs() < 1e-6);
        let m12 = KernelProfile::Matern { nu: MaternNu::Half };
        // r = √(2νψ) = 1 at ψ = 1 and √2 at ψ = 2.
        assert!((radial_profile(m12, 1.0) - (-1.0f64).exp()).abs() < 1e-16);
        assert!((radial_profile(m12, 2.0) - (-(2f64.sqrt())).exp()).abs() < 1e-16);
        assert!((radial_profile(m12, 2.0) - 0.243117).abs() < 1e-6);
        for p in PROFILES {
            assert_eq!(radial_profile(p, 0.0), 1.0);
        }
    }

    #[test]
    fn matern_matches_bessel_form() {
        for nu in [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves] {
            for psi in [0.01, 0.3, 1.0, 2.5, 7.0] {
                let got = radial_profile(KernelProfile::Matern { nu }, psi);
                let oracle = matern_bessel_form(nu.value(), psi);
                assert!((got - oracle).abs() < 1e-8, "nu={nu:?} psi={psi} {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn profiles_are_monotone_and_decay() {
        for p in PROFILES {
            let mut prev = radial_profile(p, 0.0);
            for i in 1..2000 {
                let v = radial_profile(p, i as f64 * 0.05);
                assert!(v <= prev && v > 0.0 || v == 0.0);
                prev = v;
            }
            assert!(radial_profile(p, 1e4) < 1e-10);
        }
    }

    #[test]
    fn single_point_gram() {
        let g = gram(KernelProfile::SquaredExponential, &m_true(), &[Vec3::zeros()], 0.0025).unwrap();
        assert_eq!(g.matrix()[(0, 0)], 1.0025);
        assert_eq!(g.jitter_used(), 0.0);
    }

    #[test]
    fn duplicate_inputs_need_jitter() {
        let x = [Vec3::new(0.1, 0.2, 0.3); 2];
        let g = gram(KernelProfile::SquaredExponential, &SpdMetric::identity(), &x, 0.0).unwrap();
        assert_eq!(g.matrix()[(0, 1)], 1.0);
        assert!(g.jitter_used() > 0.0);
        assert!(g.jitter_used() <= JITTER_CAP);
        assert_eq!(g.matrix()[(0, 0)], 1.0 + g.jitter_used());
    }

    #[test]
    fn indefinite_matrix_exceeds_jitter_cap() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(factorize(k, 0.0), Err(Error::JitterCapExceeded { .. })));
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let x = [Vec3::new(0.0, f64::NAN, 0.0)];
        assert!(gram(KernelProfile::SquaredExponential, &SpdMetric::identity(), &x, 0.0).is_err());
    }

    #[test]
    fn gram_matches_double_loop() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = random_points(&mut rng, 8);
        let m = m_true();
        for p in PROFILES {
            let g = gram(p, &m, &x, 0.01).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let d = x[i] - x[j];
                    let psi = (d.transpose() * m.matrix() * d)[(0, 0)];
                    let mut want = radial_profile(p, psi);
                    if i == j {
                        want += 0.01 + g.jitter_used();
                    }
                    assert!((g.matrix()[(i, j)] - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn cross_gram_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = random_points(&mut rng, 6);
        let id = SpdMetric::identity();
        let se = KernelProfile::SquaredExponential;
        let k = cross_gram(se, &id, &x, &x);
        for i in 0..6 {
            assert_eq!(k[(i, i)], 1.0);
            for j in 0..6 {
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        let far = cross_gram(se, &id, &[Vec3::new(10.0, 0.0, 0.0)], &[Vec3::zeros()]);
        assert!(far[(0, 0)] < 1e-10);
    }

    #[test]
    fn cross_gram_matches_joint_blocks() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let train = random_points(&mut rng, 7);
        let test = random_points(&mut rng, 4);
        let all: Vec<Vec3> = test.iter().chain(train.iter()).copied().collect();
        let m = m_true();
        for p in PROFILES {
            let joint = kernel_matrix(p, &m, &all);
            let cross = cross_gram(p, &m, &test, &train);
            for i in 0..4 {
                for j in 0..7 {
                    assert_eq!(cross[(i, j)], joint[(i, 4 + j)]);
                }
            }
        }
    }

    #[test]
    fn rotational_gram_equals_ard_on_rotated_inputs() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let x = random_points(&mut rng, 20);
        let (l, a) = ([0.4, 0.1, 0.8], [0.7, -0.4, 1.0]);
        let r = exp_so3(&AxisAngle(a));
        let rotated: Vec<Vec3> = x.iter().map(|v| r.apply(v)).collect();
        let m_rot = build_metric(&MetricParams::rotational(l, a)).unwrap();
        let m_ard = build_metric(&MetricParams::ard(l)).unwrap();
        for p in PROFILES {
            let k1 = kernel_matrix(p, &m_rot, &x);
            let k2 = kernel_matrix(p, &m_ard, &rotated);
            assert!((k1 - k2).amax() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_matrix_is_psd(
            seed in any::<u64>(),
            n in 1usize..50,
            l in prop::array::uniform3(0.05f64..2.0),
            a in prop::array::uniform3(-3.0f64..3.0),
            which in 0usize..4,
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let x = random_points(&mut rng, n);
            let m = build_metric(&MetricParams::rotational(l, a)).unwrap();
            let k = kernel_matrix(PROFILES[which], &m, &x);
            prop_assert_eq!(&k, &k.transpose());
            let min_eig = k.symmetric_eigenvalues().min();
            prop_assert!(min_eig >= -1e-10, "min eigenvalue {}", min_eig);
        }
    }
}
