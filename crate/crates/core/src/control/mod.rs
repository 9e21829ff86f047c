//! CPCRB-driven control design.
//!
//! The log-det objective over the next UAV twist is rewritten as a
//! non-convex quadratic program, lifted to a semidefinite relaxation, and a
//! feasible twist is recovered by Gaussian randomization.
//!
//! Only the UPA-midpoint velocity `v_s = S xi` enters the Doppler row of `Psi`,
//! so `Psi = Psi1 + Psi2(xi)` with `Psi2 = e4 (M S xi)^T [I 0]`.

pub mod randomize;
pub mod sdp;

use nalgebra::{
    DMatrix, Matrix3, Matrix4, Matrix6, SMatrix, SymmetricEigen, Vector3, Vector4, Vector6,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobians::{jac_zeta_wrt_pose, Matrix4x6, MeasurementModel};
use crate::kinematics::local_velocity;
use crate::lie::{skew, Pose, Twist};
use crate::linalg::{spd_inverse, symmetrize};
use crate::waveform::SPEED_OF_LIGHT;

pub use randomize::{randomize_extract, FeasibleRegion};
pub use sdp::SdpSettings;

pub type Matrix3x6 = SMatrix<f64, 3, 6>;
pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Matrix3x4 = SMatrix<f64, 3, 4>;

/// Twist components pinned to zero: `nu_z`, `omega_x`, `omega_y`.
pub const EQUALITY_INDICES: [usize; 3] = [2, 3, 4];
/// Free twist components: `nu_x`, `nu_y`, `omega_z`.
pub const FREE_INDICES: [usize; 3] = [0, 1, 5];

const MAX_COND: f64 = 1e14;

/// Velocity of the UPA midpoint as a linear map of the body twist: `[I, -[s]x]`.
pub fn upa_selector(s: &Vector3<f64>) -> Matrix3x6 {
    let mut m = Matrix3x6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::identity());
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(s)));
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiPartition {
    /// Linear-velocity block of the delay and angle rows.
    pub b: Matrix3<f64>,
    pub c11: Vector3<f64>,
    /// Control-dependent part of the Doppler row, `M S xi`.
    pub c12: Vector3<f64>,
    pub c2: Vector3<f64>,
    pub m: Matrix3<f64>,
    pub s: Matrix3x6,
}

impl PsiPartition {
    /// The control-independent part `Psi1`.
    pub fn psi1(&self) -> Matrix4x6 {
        let mut p = Matrix4x6::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.b);
        p.fixed_view_mut::<1, 3>(3, 0)
            .copy_from(&self.c11.transpose());
        p.fixed_view_mut::<1, 3>(3, 3)
            .copy_from(&self.c2.transpose());
        p
    }

    /// `Psi2` for an arbitrary twist.
    pub fn psi2(&self, xi: &Vector6<f64>) -> Matrix4x6 {
        let c12 = self.m * self.s * xi;
        let mut p = Matrix4x6::zeros();
        p.fixed_view_mut::<1, 3>(3, 0).copy_from(&c12.transpose());
        p
    }
}

pub fn partition_psi(
    t_sp: &Pose,
    v_p_local: &Vector3<f64>,
    xi_s_next: &Twist,
    s: &Vector3<f64>,
    fc: f64,
) -> Result<PsiPartition> {
    let base = jac_zeta_wrt_pose(t_sp, v_p_local, &Vector3::zeros(), fc)?;
    let r = t_sp.trans;
    let rho2 = r.norm_squared();
    let proj = Matrix3::identity() - r * r.transpose() / rho2;
    let m = -t_sp.rot.transpose() * proj * (2.0 * fc / (SPEED_OF_LIGHT * rho2.sqrt()));
    let sel = upa_selector(s);
    Ok(PsiPartition {
        b: base.fixed_view::<3, 3>(0, 0).into_owned(),
        c11: base.fixed_view::<1, 3>(3, 0).transpose(),
        c12: m * sel * xi_s_next.0,
        c2: base.fixed_view::<1, 3>(3, 3).transpose(),
        m,
        s: sel,
    })
}

/// Parameter-domain Fisher information `J^T C^-1 J` for the isotropic augmented noise.
pub fn param_information(
    model: &MeasurementModel,
    t_sp: &Pose,
    xi_s: &Twist,
    meas_var: f64,
) -> Result<Matrix4<f64>> {
    let zeta = model.params(t_sp, xi_s)?;
    let j = model.jac_y_zeta(&zeta)?;
    let a = j.tr_mul(&j) / meas_var;
    Ok(symmetrize(&Matrix4::from_iterator(a.iter().copied())))
}

/// `max xi^T P xi + 2 c^T xi` equivalent of the log-det objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticForm {
    pub p_bar: Matrix6<f64>,
    pub c: Vector6<f64>,
    pub c0: f64,
    /// `A~^-1 + D0` and its blocks.
    pub g: Matrix4<f64>,
    pub a_bar: Matrix3<f64>,
    pub a: Vector3<f64>,
    pub a0: f64,
    pub k: Matrix4x6,
    pub p_tilde: Matrix6<f64>,
}

impl QuadraticForm {
    pub fn objective(&self, xi: &Vector6<f64>) -> f64 {
        xi.dot(&(self.p_bar * xi)) + 2.0 * self.c.dot(xi)
    }

    /// `D(xi) = e4 xi^T K^T + K xi e4^T + (xi^T P~ xi) e4 e4^T`.
    pub fn d_matrix(&self, xi: &Vector6<f64>) -> Matrix4<f64> {
        let kx = self.k * xi;
        let e4 = Vector4::new(0.0, 0.0, 0.0, 1.0);
        e4 * kx.transpose()
            + kx * e4.transpose()
            + e4 * e4.transpose() * xi.dot(&(self.p_tilde * xi))
    }

    /// `-log det(A~^-1 + D0 + D(xi))` through the separated form.
    pub fn neg_logdet(&self, xi: &Vector6<f64>) -> f64 {
        -self.g.determinant().ln() - (1.0 + self.c0 * self.objective(xi)).ln()
    }
}

pub fn build_quadratic_form(
    e: &Matrix6<f64>,
    a_tilde: &Matrix4<f64>,
    part: &PsiPartition,
) -> Result<QuadraticForm> {
    let e_inv = spd_inverse(e, "prior information", MAX_COND)?;
    let e11 = e_inv.fixed_view::<3, 3>(0, 0).into_owned();
    let e12 = e_inv.fixed_view::<3, 3>(0, 3).into_owned();
    let psi1 = part.psi1();
    let d0 = psi1 * e_inv * psi1.transpose();
    let g = symmetrize(&(spd_inverse(a_tilde, "parameter information", MAX_COND)? + d0));
    let a_bar = g.fixed_view::<3, 3>(0, 0).into_owned();
    let a = g.fixed_view::<3, 1>(0, 3).into_owned();
    let a0 = g[(3, 3)];
    let a_bar_inv = spd_inverse(&a_bar, "A bar", MAX_COND)?;

    let mut e_tilde = Matrix3x4::zeros();
    e_tilde
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(e11 * part.b.transpose()));
    e_tilde.set_column(3, &(e11 * part.c11 + e12 * part.c2));
    let ms = part.m * part.s;
    let k = e_tilde.transpose() * ms;
    let p_tilde = symmetrize(&(ms.transpose() * e11 * ms));
    let inner = e11 - e11 * part.b.transpose() * a_bar_inv * part.b * e11;
    let p_bar = symmetrize(&(ms.transpose() * inner * ms));
    let c = ms.transpose()
        * (e11 * part.c11 + e12 * part.c2 - e11 * part.b.transpose() * a_bar_inv * a);
    let schur = a0 - a.dot(&(a_bar_inv * a));
    if !(schur > 0.0) {
        return Err(Error::IllConditioned {
            what: "quadratic-form Schur complement",
            cond: f64::INFINITY,
        });
    }
    Ok(QuadraticForm {
        p_bar,
        c,
        c0: 1.0 / schur,
        g,
        a_bar,
        a,
        a0,
        k,
        p_tilde,
    })
}

/// Motion limits for the next twist.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionLimits {
    /// Horizontal linear speed (m/s).
    pub v_l: f64,
    /// Change of linear velocity per epoch (m/s).
    pub a_l: f64,
    /// Yaw rate (rad/s).
    pub v_a: f64,
    /// Change of yaw rate per epoch (rad/s).
    pub a_a: f64,
    /// Change of the UPA midpoint's world velocity per epoch (m/s).
    pub v: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            v_l: 6.0,
            a_l: 2.0,
            v_a: 0.15,
            a_a: 0.05,
            v: 0.5,
        }
    }
}

impl MotionLimits {
    pub fn validate(&self) -> Result<()> {
        if [self.v_l, self.a_l, self.v_a, self.a_a, self.v]
            .iter()
            .all(|&x| x > 0.0 && x.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Config("motion limits must be positive".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintSet {
    pub limits: MotionLimits,
    pub prev: Twist,
    pub s: Vector3<f64>,
    /// UAV attitude at the current epoch.
    pub r1: Matrix3<f64>,
    /// UAV attitude at the previous epoch.
    pub r2: Matrix3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QcqpInstance {
    pub q0: Matrix6<f64>,
    pub c: Vector6<f64>,
    pub q1: Matrix6<f64>,
    pub q2: Matrix6<f64>,
    pub q3: Matrix6<f64>,
    pub b1: Vector6<f64>,
    pub b2: Vector6<f64>,
    pub b3: Vector3<f64>,
    pub v1: f64,
    pub v2: f64,
    pub a1: f64,
    pub a2: f64,
    pub v_sq: f64,
    pub s: Matrix3x6,
    pub r1: Matrix3<f64>,
    pub r2: Matrix3<f64>,
}

pub fn assemble_qcqp(qf: &QuadraticForm, cons: &ConstraintSet) -> QcqpInstance {
    let mut q1 = Matrix6::zeros();
    q1[(0, 0)] = 1.0;
    q1[(1, 1)] = 1.0;
    let mut q2 = Matrix6::zeros();
    q2[(5, 5)] = 1.0;
    let s = upa_selector(&cons.s);
    let l = &cons.limits;
    QcqpInstance {
        q0: qf.p_bar,
        c: qf.c,
        q1,
        q2,
        q3: s.transpose() * s,
        b1: q1 * cons.prev.0,
        b2: q2 * cons.prev.0,
        b3: s * cons.prev.0,
        v1: l.v_l * l.v_l,
        v2: l.v_a * l.v_a,
        a1: l.a_l * l.a_l,
        a2: l.a_a * l.a_a,
        v_sq: l.v * l.v,
        s,
        r1: cons.r1,
        r2: cons.r2,
    }
}

impl QcqpInstance {
    pub fn objective(&self, xi: &Vector6<f64>) -> f64 {
        xi.dot(&(self.q0 * xi)) + 2.0 * self.c.dot(xi)
    }

    /// The five inequality constraints as ratios to their limits (feasible iff <= 1).
    pub fn inequality_ratios(&self, xi: &Vector6<f64>) -> [f64; 5] {
        let quad = |q: &Matrix6<f64>, b: &Vector6<f64>| {
            xi.dot(&(q * xi)) - 2.0 * b.dot(xi) + b.norm_squared()
        };
        let world = self.r1 * self.s * xi - self.r2 * self.b3;
        [
            xi.dot(&(self.q1 * xi)) / self.v1,
            xi.dot(&(self.q2 * xi)) / self.v2,
            quad(&self.q1, &self.b1) / self.a1,
            quad(&self.q2, &self.b2) / self.a2,
            world.norm_squared() / self.v_sq,
        ]
    }

    pub fn equality_residual(&self, xi: &Vector6<f64>) -> f64 {
        EQUALITY_INDICES
            .iter()
            .map(|&i| xi[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, xi: &Vector6<f64>, tol: f64) -> bool {
        self.equality_residual(xi) <= tol
            && self.inequality_ratios(xi).iter().all(|&r| r <= 1.0 + tol)
    }
}

/// Homogenized matrices `Q0bar .. Q8bar` acting on `[xi; t]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogenizedSdp {
    pub qbar: [Matrix7; 9],
}

fn embed7(q: &Matrix6<f64>, b: &Vector6<f64>, corner: f64) -> Matrix7 {
    let mut m = Matrix7::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(q);
    m.fixed_view_mut::<6, 1>(0, 6).copy_from(b);
    m.fixed_view_mut::<1, 6>(6, 0).copy_from(&b.transpose());
    m[(6, 6)] = corner;
    m
}

pub fn homogenize(q: &QcqpInstance) -> Result<HomogenizedSdp> {
    let zero = Vector6::zeros();
    let mut qbar = [Matrix7::zeros(); 9];
    qbar[0] = embed7(&q.q0, &q.c, 0.0);
    qbar[1] = embed7(&q.q1, &zero, 0.0) / q.v1;
    qbar[2] = embed7(&q.q2, &zero, 0.0) / q.v2;
    qbar[3] = embed7(&q.q1, &-q.b1, q.b1.norm_squared()) / q.a1;
    qbar[4] = embed7(&q.q2, &-q.b2, q.b2.norm_squared()) / q.a2;
    let cross = -(q.s.transpose() * q.r1.transpose() * q.r2 * q.b3);
    qbar[5] = embed7(&q.q3, &cross, q.b3.norm_squared()) / q.v_sq;
    for (k, &i) in EQUALITY_INDICES.iter().enumerate() {
        let mut e = Matrix6::zeros();
        e[(i, i)] = 1.0;
        qbar[6 + k] = embed7(&e, &zero, 0.0);
    }
    for (i, m) in qbar.iter().enumerate().skip(1) {
        let min_eig = SymmetricEigen::new(*m).eigenvalues.min();
        let scale = 1.0 + m.amax();
        if min_eig < -1e-6 * scale {
            return Err(Error::SchurViolation { index: i, min_eig });
        }
    }
    Ok(HomogenizedSdp { qbar })
}

/// Coordinates of `[xi; t]` kept once the equality-pinned components are eliminated.
pub const REDUCED_INDICES: [usize; 4] = [0, 1, 5, 6];

impl HomogenizedSdp {
    pub fn reduced(&self, i: usize) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.qbar[i][(REDUCED_INDICES[r], REDUCED_INDICES[c])])
    }
}

#[derive(Clone, Debug)]
pub struct SdpRelaxation {
    /// Optimal lifted variable, embedded back into 7x7.
    pub z: Matrix7,
    pub z_reduced: Matrix4<f64>,
    /// Dual bound on the QCQP optimum.
    pub upper_bound: f64,
    pub primal_value: f64,
    pub rel_gap: f64,
    pub iterations: usize,
}

/// Semidefinite relaxation of the homogenized problem.
///
/// The three equality constraints force the matching rows and columns of any
/// PSD solution to vanish, so the problem is solved over the 4x4 block of the
/// free coordinates (which keeps a strictly feasible point) and embedded back.
pub fn solve_sdp(h: &HomogenizedSdp, settings: &SdpSettings) -> Result<SdpRelaxation> {
    let n = 4 + 5;
    let c_red = h.reduced(0);
    let c_norm = c_red.norm();
    let c_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
    let mut c = DMatrix::zeros(n, n);
    c.view_mut((0, 0), (4, 4)).copy_from(&(-c_red / c_scale));
    let mut cons = Vec::with_capacity(6);
    for i in 1..=5 {
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (4, 4)).copy_from(&h.reduced(i));
        a[(3 + i, 3 + i)] = 1.0;
        cons.push(a);
    }
    let mut t = DMatrix::zeros(n, n);
    t[(3, 3)] = 1.0;
    cons.push(t);
    let b = nalgebra::DVector::from_element(6, 1.0);
    let sol = sdp::solve(&c, &cons, &b, settings)?;
    let z_reduced = symmetrize(&Matrix4::from_fn(|r, cc| sol.x[(r, cc)]));
    let mut z = Matrix7::zeros();
    for r in 0..4 {
        for cc in 0..4 {
            z[(REDUCED_INDICES[r], REDUCED_INDICES[cc])] = z_reduced[(r, cc)];
        }
    }
    Ok(SdpRelaxation {
        z,
        z_reduced,
        upper_bound: -sol.dual_obj * c_scale,
        primal_value: -sol.primal_obj * c_scale,
        rel_gap: sol.rel_gap,
        iterations: sol.iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSettings {
    pub n_samples: usize,
    pub sdp_tol: f64,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            n_samples: 200,
            sdp_tol: 1e-9,
        }
    }
}

/// Everything the controller needs at one epoch.
#[derive(Clone, Copy, Debug)]
pub struct ControlProblem<'a> {
    /// Prior information `E` for the upcoming epoch.
    pub prior_info: &'a Matrix6<f64>,
    /// Predicted relative pose.
    pub t_pred: &'a Pose,
    pub model: &'a MeasurementModel,
    pub meas_var: f64,
    pub cons: ConstraintSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlOutcome {
    pub twist: Twist,
    pub objective: f64,
    pub upper_bound: Option<f64>,
    /// Why the optimizer failed, when the fallback twist was used instead.
    pub fallback: Option<Error>,
}

/// Previous twist clipped into the constraint set.
pub fn fallback_twist(cons: &ConstraintSet) -> Twist {
    let region = FeasibleRegion::from_constraints(cons);
    let x = region
        .anchor()
        .unwrap_or_else(|| region.reduce(&cons.prev.0));
    Twist(region.embed(&x))
}

/// Every intermediate of one controller solve, for inspection and verification.
#[derive(Clone, Debug)]
pub struct ControlSolution {
    pub form: QuadraticForm,
    pub qcqp: QcqpInstance,
    pub relaxation: SdpRelaxation,
    pub region: FeasibleRegion,
    pub twist: Vector6<f64>,
}

pub fn solve_control_problem<R: Rng + ?Sized>(
    p: &ControlProblem<'_>,
    settings: &ControlSettings,
    rng: &mut R,
) -> Result<ControlSolution> {
    let v_p = local_velocity(&p.model.xi_p, &Vector3::zeros());
    let part = partition_psi(
        p.t_pred,
        &v_p,
        &p.cons.prev,
        &p.model.offset.vector(),
        p.model.grid.fc,
    )?;
    let a_tilde = param_information(p.model, p.t_pred, &p.cons.prev, p.meas_var)?;
    let form = build_quadratic_form(p.prior_info, &a_tilde, &part)?;
    let qcqp = assemble_qcqp(&form, &p.cons);
    let hom = homogenize(&qcqp)?;
    let relaxation = solve_sdp(
        &hom,
        &SdpSettings {
            tol: settings.sdp_tol,
            ..SdpSettings::default()
        },
    )?;
    let region = FeasibleRegion::from_constraints(&p.cons);
    let x = randomize_extract(
        &relaxation.z_reduced,
        &qcqp,
        &region,
        settings.n_samples,
        rng,
    )?;
    let twist = region.embed(&x);
    Ok(ControlSolution {
        form,
        qcqp,
        relaxation,
        region,
        twist,
    })
}

fn optimize_inner<R: Rng + ?Sized>(
    p: &ControlProblem<'_>,
    settings: &ControlSettings,
    rng: &mut R,
) -> Result<ControlOutcome> {
    let sol = solve_control_problem(p, settings, rng)?;
    Ok(ControlOutcome {
        twist: Twist(sol.twist),
        objective: sol.qcqp.objective(&sol.twist),
        upper_bound: Some(sol.relaxation.upper_bound),
        fallback: None,
    })
}

pub fn optimize_control<R: Rng + ?Sized>(
    p: &ControlProblem<'_>,
    settings: &ControlSettings,
    rng: &mut R,
) -> ControlOutcome {
    match optimize_inner(p, settings, rng) {
        Ok(out) => out,
        Err(e) => ControlOutcome {
            twist: fallback_twist(&p.cons),
            objective: f64::NAN,
            upper_bound: None,
            fallback: Some(e),
        },
    }
}
