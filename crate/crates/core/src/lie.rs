//! SE(3) and SO(3) primitives.
//!
//! Twists are stored as 6-vectors ordered `[nu; omega]` (linear velocity
//! first, angular velocity second). Every 6x6 matrix in this crate (adjoints,
//! Jacobians, covariances) uses the same ordering. Perturbations are applied
//! on the right: `T (+) d = T * Exp(d)`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector4, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Below this rotation angle Log and the right Jacobian use first-order forms.
const LOG_SMALL_ANGLE: f64 = 1e-6;
/// Series switchover for the Rodrigues-type coefficients. The closed forms
/// cancel catastrophically for small angles.
const JAC_SERIES_ANGLE: f64 = 1e-2;
/// The coupling-block coefficients cancel to fourth order, so switch later.
const Q_SERIES_ANGLE: f64 = 0.1;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the antisymmetric part of `m`.
pub fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) * 0.5
}

/// Body or spatial twist `[nu; omega]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(nu: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Self(Vector6::new(nu.x, nu.y, nu.z, omega.x, omega.y, omega.z))
    }

    pub fn from_slice(v: &[f64; 6]) -> Self {
        Self(Vector6::from_column_slice(v))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn nu(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn omega(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn as_vector(&self) -> &Vector6<f64> {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Small adjoint `ad_xi`, the matrix of the Lie bracket `[xi, .]`.
    pub fn ad(&self) -> Matrix6<f64> {
        let wx = skew(&self.omega());
        let vx = skew(&self.nu());
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&wx);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&vx);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&wx);
        m
    }
}

impl From<Vector6<f64>> for Twist {
    fn from(v: Vector6<f64>) -> Self {
        Self(v)
    }
}

impl Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist(self.0 + rhs.0)
    }
}

impl Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist(self.0 - rhs.0)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist(-self.0)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, rhs: f64) -> Twist {
        Twist(self.0 * rhs)
    }
}

/// Rigid-body transform `(R, r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rot: Matrix3<f64>, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    pub fn identity() -> Self {
        Self {
            rot: Matrix3::identity(),
            trans: Vector3::zeros(),
        }
    }

    pub fn from_translation(trans: Vector3<f64>) -> Self {
        Self {
            rot: Matrix3::identity(),
            trans,
        }
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        Self {
            rot: m.fixed_view::<3, 3>(0, 0).into_owned(),
            trans: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.trans);
        m
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self {
            rot: rt,
            trans: -(rt * self.trans),
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rot: self.rot * other.rot,
            trans: self.rot * other.trans + self.trans,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.trans
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rot * v
    }

    /// Largest entry of `R^T R - I` plus the determinant defect.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rot.transpose() * self.rot - Matrix3::identity())
            .abs()
            .max();
        e.max((self.rot.determinant() - 1.0).abs())
    }

    /// Projects the rotation back onto SO(3) (polar decomposition).
    pub fn renormalized(&self) -> Pose {
        let svd = self.rot.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut rot = u * vt;
        if rot.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            rot = u * vt;
        }
        Pose {
            rot,
            trans: self.trans,
        }
    }

    pub fn exp(xi: &Twist) -> Pose {
        exp_map(xi, 1.0)
    }

    pub fn log(&self) -> Result<Twist> {
        log_map(self)
    }

    pub fn adjoint(&self) -> Matrix6<f64> {
        adjoint(self)
    }

    pub fn plus(&self, delta: &Twist) -> Pose {
        right_plus(self, delta)
    }

    /// `self (-) other`, i.e. `Log(other^-1 * self)`.
    pub fn minus(&self, other: &Pose) -> Result<Twist> {
        right_minus(self, other)
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Homogeneous coordinates: points carry a trailing 1, free vectors a 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Homogeneous {
    Point(Vector3<f64>),
    Vector(Vector3<f64>),
}

impl Homogeneous {
    pub fn to_vec4(&self) -> Vector4<f64> {
        match self {
            Homogeneous::Point(p) => Vector4::new(p.x, p.y, p.z, 1.0),
            Homogeneous::Vector(v) => Vector4::new(v.x, v.y, v.z, 0.0),
        }
    }

    pub fn xyz(&self) -> Vector3<f64> {
        match self {
            Homogeneous::Point(p) | Homogeneous::Vector(p) => *p,
        }
    }
}

pub fn hat(xi: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xi.omega()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.nu());
    m
}

pub fn vee(m: &Matrix4<f64>) -> Twist {
    let w = unskew(&m.fixed_view::<3, 3>(0, 0).into_owned());
    let v = m.fixed_view::<3, 1>(0, 3).into_owned();
    Twist::new(v, w)
}

/// `sin t / t`, `(1 - cos t) / t^2` and `(t - sin t) / t^3`, via series near zero.
fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    if theta < JAC_SERIES_ANGLE {
        (
            1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)),
            0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0)),
            1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)),
        )
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

/// SO(3) exponential (Rodrigues).
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = rodrigues_coeffs(w.norm());
    let wx = skew(w);
    Matrix3::identity() + wx * a + wx * wx * b
}

/// Capitalized exponential of `xi * dt`.
pub fn exp_map(xi: &Twist, dt: f64) -> Pose {
    let w = xi.omega() * dt;
    let v = xi.nu() * dt;
    let (a, b, c) = rodrigues_coeffs(w.norm());
    let wx = skew(&w);
    let wx2 = wx * wx;
    let rot = Matrix3::identity() + wx * a + wx2 * b;
    let vmat = Matrix3::identity() + wx * b + wx2 * c;
    Pose {
        rot,
        trans: vmat * v,
    }
}

/// SO(3) logarithm as a rotation vector. Fails near an angle of pi.
pub fn so3_log(rot: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let trace = rot.trace();
    if trace <= -1.0 + 1e-6 {
        return Err(Error::AngleNearPi { trace });
    }
    let axis_sin = unskew(rot);
    let s = axis_sin.norm();
    let c = 0.5 * (trace - 1.0);
    let theta = s.atan2(c);
    if theta < LOG_SMALL_ANGLE {
        Ok(axis_sin * (1.0 + theta * theta / 6.0))
    } else {
        Ok(axis_sin * (theta / s))
    }
}

pub fn log_map(t: &Pose) -> Result<Twist> {
    let w = so3_log(&t.rot)?;
    let theta = w.norm();
    let wx = skew(&w);
    let coef = if theta < JAC_SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let (s, c) = theta.sin_cos();
        (1.0 - theta * s / (2.0 * (1.0 - c))) / (theta * theta)
    };
    let vinv = Matrix3::identity() - wx * 0.5 + wx * wx * coef;
    Ok(Twist::new(vinv * t.trans, w))
}

/// `Ad_T = [[R, [r]x R], [0, R]]`, so that `Exp(Ad_T xi) = T Exp(xi) T^-1`.
pub fn adjoint(t: &Pose) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.rot);
    m.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(skew(&t.trans) * t.rot));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&t.rot);
    m
}

/// Inverse adjoint, computed in closed form.
pub fn adjoint_inv(t: &Pose) -> Matrix6<f64> {
    adjoint(&t.inverse())
}

/// SO(3) left Jacobian.
fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let wx = skew(w);
    let (_, a, b) = rodrigues_coeffs(theta);
    Matrix3::identity() + wx * a + wx * wx * b
}

/// Coupling block of the SE(3) left Jacobian.
fn se3_q_block(rho: &Vector3<f64>, w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let t2 = theta * theta;
    let (a1, a2, a3) = if theta < Q_SERIES_ANGLE {
        (
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0,
            1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0 - t2 * t2 * t2 / 3628800.0,
            1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0 - t2 * t2 * t2 / 9979200.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let px = skew(rho);
    let wx = skew(w);
    let wpw = wx * px * wx;
    px * 0.5
        + (wx * px + px * wx + wpw) * a1
        + (wx * wx * px + px * wx * wx - wpw * 3.0) * a2
        + (wpw * wx + wx * wpw) * a3
}

fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let (rho, w) = (xi.nu(), xi.omega());
    let jl = so3_left_jacobian(&w);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    m.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&se3_q_block(&rho, &w));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    m
}

/// SE(3) right Jacobian: `Exp(xi + d) ~= Exp(xi) Exp(J_r(xi) d)`.
pub fn right_jacobian(xi: &Twist) -> Matrix6<f64> {
    if xi.0.norm() < LOG_SMALL_ANGLE {
        return Matrix6::identity() - xi.ad() * 0.5;
    }
    se3_left_jacobian(&-*xi)
}

pub fn right_plus(t: &Pose, delta: &Twist) -> Pose {
    t.compose(&exp_map(delta, 1.0))
}

/// `t2 (-) t1 = Log(t1^-1 t2)`.
pub fn right_minus(t2: &Pose, t1: &Pose) -> Result<Twist> {
    log_map(&t1.inverse().compose(t2))
}

/// Draws a zero-mean Gaussian tangent vector with covariance `cov`.
///
/// The square root comes from a symmetric eigendecomposition of
/// `cov + 1e-12 I`, so an exactly-zero covariance yields an exactly-zero draw.
pub fn sample_pose_noise<R: Rng + ?Sized>(cov: &Matrix6<f64>, rng: &mut R) -> Result<Twist> {
    let root = psd_sqrt(cov)?;
    let z = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(Twist(root * z))
}

/// Symmetric factor `L` with `L L^T = cov` (up to the jitter).
pub fn psd_sqrt(cov: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    if cov.iter().all(|&x| x == 0.0) {
        return Ok(Matrix6::zeros());
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let scale = sym.abs().max().max(1.0);
    let eig = (sym + Matrix6::identity() * 1e-12).symmetric_eigen();
    if eig.eigenvalues.min() < -1e-10 * scale {
        return Err(Error::NotPsd);
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix6::from_diagonal(&d))
}

/// Homogeneous action of a pose on a point or free vector.
pub fn act(t: &Pose, x: &Homogeneous) -> Homogeneous {
    match x {
        Homogeneous::Point(p) => Homogeneous::Point(t.transform_point(p)),
        Homogeneous::Vector(v) => Homogeneous::Vector(t.transform_vector(v)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_twist(rng: &mut ChaCha8Rng, scale: f64) -> Twist {
        Twist(Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)) * scale)
    }

    #[test]
    fn hat_of_zero_and_translation() {
        assert_eq!(hat(&Twist::zero()), Matrix4::zeros());
        let m = hat(&Twist::from_slice(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::zeros());
        assert_eq!(
            m.fixed_view::<3, 1>(0, 3).into_owned(),
            Vector3::new(1.0, 2.0, 3.0)
        );
    }

    #[test]
    fn hat_vee_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let xi = random_twist(&mut rng, 5.0);
            assert!((vee(&hat(&xi)).0 - xi.0).norm() < 1e-15);
        }
    }

    #[test]
    fn exp_pure_translation_and_quarter_turn() {
        let t = exp_map(&Twist::from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 1.0);
        assert_eq!(t.rot, Matrix3::identity());
        assert_eq!(t.trans, Vector3::new(1.0, 0.0, 0.0));

        let t = exp_map(
            &Twist::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2]),
            1.0,
        );
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((t.rot - expected).abs().max() < 1e-15);
        assert!(t.trans.norm() < 1e-15);

        assert_eq!(exp_map(&Twist::zero(), 0.3), Pose::identity());
    }

    #[test]
    fn exp_matches_matrix_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let xi = random_twist(&mut rng, 1.5);
            let series = hat(&xi).exp();
            let closed = exp_map(&xi, 1.0).to_matrix();
            assert!((series - closed).abs().max() < 1e-12);
        }
    }

    #[test]
    fn small_rotation_with_long_translation_keeps_precision() {
        // the translation-to-rotation coupling is where closed forms cancel
        for &angle in &[1e-7, 3e-6, 1e-4, 5e-3, 0.05, 0.3] {
            let xi = Twist::from_slice(&[300.0, -120.0, 40.0, angle, -0.5 * angle, 0.8 * angle]);
            let series = hat(&xi).exp();
            let closed = exp_map(&xi, 1.0);
            assert!(
                (series - closed.to_matrix()).abs().max() < 1e-12 * 300.0,
                "angle {angle}"
            );
            let back = log_map(&closed).unwrap();
            assert!((back.0 - xi.0).norm() < 1e-12 * 300.0, "angle {angle}");
        }
    }

    #[test]
    fn log_of_identity_and_translation() {
        assert_eq!(log_map(&Pose::identity()).unwrap(), Twist::zero());
        let xi = log_map(&Pose::from_translation(Vector3::new(1.0, 0.0, 0.0))).unwrap();
        assert!((xi.0 - Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn log_rejects_half_turn() {
        let t = exp_map(
            &Twist::from_slice(&[0.0, 0.0, 0.0, std::f64::consts::PI, 0.0, 0.0]),
            1.0,
        );
        assert!(matches!(log_map(&t), Err(Error::AngleNearPi { .. })));
    }

    #[test]
    fn exp_log_round_trip_including_small_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for scale in [1e-10, 1e-7, 1e-4, 0.1, 1.0] {
            for _ in 0..50 {
                let xi = random_twist(&mut rng, scale);
                let back = log_map(&exp_map(&xi, 1.0)).unwrap();
                assert!((back.0 - xi.0).norm() < 1e-9 * (1.0 + scale));
            }
        }
    }

    #[test]
    fn adjoint_identity_and_pure_rotation() {
        assert_eq!(adjoint(&Pose::identity()), Matrix6::identity());
        let r = so3_exp(&Vector3::new(0.3, -0.2, 0.5));
        let ad = adjoint(&Pose::new(r, Vector3::zeros()));
        assert_eq!(ad.fixed_view::<3, 3>(0, 0).into_owned(), r);
        assert_eq!(ad.fixed_view::<3, 3>(3, 3).into_owned(), r);
        assert_eq!(ad.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());
    }

    #[test]
    fn adjoint_conjugation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let t = exp_map(&random_twist(&mut rng, 2.0), 1.0);
            let xi = random_twist(&mut rng, 1.0);
            let lhs = exp_map(&Twist(adjoint(&t) * xi.0), 1.0);
            let rhs = t * exp_map(&xi, 1.0) * t.inverse();
            assert!((lhs.to_matrix() - rhs.to_matrix()).abs().max() < 1e-9);
        }
        let t = exp_map(&random_twist(&mut rng, 2.0), 1.0);
        assert!(
            (adjoint_inv(&t) * adjoint(&t) - Matrix6::identity())
                .abs()
                .max()
                < 1e-12
        );
    }

    #[test]
    fn right_jacobian_special_cases() {
        assert_eq!(right_jacobian(&Twist::zero()), Matrix6::identity());
        let jr = right_jacobian(&Twist::from_slice(&[1.0, -2.0, 0.5, 0.0, 0.0, 0.0]));
        // translations commute; only the rho x coupling survives at first order
        assert!(
            (jr.fixed_view::<3, 3>(0, 0).into_owned() - Matrix3::identity())
                .abs()
                .max()
                < 1e-15
        );
        assert!(
            (jr.fixed_view::<3, 3>(3, 3).into_owned() - Matrix3::identity())
                .abs()
                .max()
                < 1e-15
        );
    }

    #[test]
    fn right_jacobian_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-6;
        for scale in [1e-3, 0.05, 1.0] {
            for _ in 0..50 {
                let xi = random_twist(&mut rng, scale);
                let jr = right_jacobian(&xi);
                let base = exp_map(&xi, 1.0);
                for k in 0..6 {
                    let mut d = Vector6::zeros();
                    d[k] = eps;
                    let fwd = right_minus(&exp_map(&Twist(xi.0 + d), 1.0), &base).unwrap();
                    let bwd = right_minus(&exp_map(&Twist(xi.0 - d), 1.0), &base).unwrap();
                    let fd = (fwd.0 - bwd.0) / (2.0 * eps);
                    assert!((fd - jr.column(k)).norm() < 1e-6, "scale {scale} col {k}");
                }
            }
        }
    }

    #[test]
    fn plus_minus_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let t = exp_map(&random_twist(&mut rng, 2.0), 1.0);
            let d = random_twist(&mut rng, 0.5);
            assert_eq!(right_plus(&t, &Twist::zero()), t);
            let back = right_minus(&right_plus(&t, &d), &t).unwrap();
            assert!((back.0 - d.0).norm() < 1e-9);
            let t2 = exp_map(&random_twist(&mut rng, 0.8), 1.0);
            let rec = right_plus(&t, &right_minus(&t2, &t).unwrap());
            assert!((rec.to_matrix() - t2.to_matrix()).abs().max() < 1e-9);
        }
        let d = random_twist(&mut rng, 0.5);
        assert_eq!(
            right_plus(&Pose::identity(), &d).to_matrix(),
            exp_map(&d, 1.0).to_matrix()
        );
    }

    #[test]
    fn zero_covariance_gives_zero_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            sample_pose_noise(&Matrix6::zeros(), &mut rng).unwrap(),
            Twist::zero()
        );
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cov = Matrix6::identity();
        cov[(2, 2)] = -1.0;
        assert_eq!(sample_pose_noise(&cov, &mut rng), Err(Error::NotPsd));
    }

    #[test]
    fn sample_covariance_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Matrix6::from_fn(|i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
        let cov = a * a.transpose()
            + Matrix6::from_diagonal(&Vector6::new(0.5, 0.2, 0.1, 0.05, 0.02, 0.01));
        let n = 100_000;
        let mut acc = Matrix6::zeros();
        for _ in 0..n {
            let s = sample_pose_noise(&cov, &mut rng).unwrap().0;
            acc += s * s.transpose();
        }
        let sample = acc / n as f64;
        assert!((sample - cov).norm() / cov.norm() < 0.05);

        let diag = Matrix6::from_diagonal(&Vector6::new(4.0, 1.0, 0.25, 0.01, 0.04, 9.0));
        let mut var = Vector6::zeros();
        for _ in 0..n {
            let s = sample_pose_noise(&diag, &mut rng).unwrap().0;
            var += s.component_mul(&s);
        }
        var /= n as f64;
        for k in 0..6 {
            assert!(close(var[k] / diag[(k, k)], 1.0, 0.05));
        }
    }

    #[test]
    fn action_on_points_and_vectors() {
        let t = exp_map(&Twist::from_slice(&[1.0, 2.0, -1.0, 0.2, 0.4, -0.3]), 1.0);
        let p = Homogeneous::Point(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(act(&Pose::identity(), &p), p);
        let v = Homogeneous::Vector(Vector3::new(0.5, -1.0, 2.0));
        assert_eq!(
            act(&Pose::from_translation(Vector3::new(4.0, 5.0, 6.0)), &v),
            v
        );
        let w = Homogeneous::Vector(Vector3::new(-1.0, 0.3, 0.7));
        let lhs = act(&t, &v).to_vec4().dot(&act(&t, &w).to_vec4());
        assert!(close(lhs, v.to_vec4().dot(&w.to_vec4()), 1e-12));
        assert_eq!(act(&t, &p).to_vec4()[3], 1.0);
        assert_eq!(act(&t, &v).to_vec4()[3], 0.0);
    }

    #[test]
    fn renormalization_repairs_drift() {
        let mut t = exp_map(&Twist::from_slice(&[0.0, 0.0, 0.0, 0.3, 0.2, 0.1]), 1.0);
        t.rot[(0, 1)] += 1e-6;
        assert!(t.orthonormality_error() > 1e-9);
        assert!(t.renormalized().orthonormality_error() < 1e-14);
    }
}
