//! Analytic derivatives of the channel and of the radar parameters, the
//! filter transition and control Jacobians, and the stacked measurement model.
//!
//! Index vectors are the raw element indices `0..N`. Angle columns use the
//! azimuth coefficients `f_phi = [cos phi, -sin phi, -cos phi, sin phi]`
//! against the selector columns `[n_Ty, n_Tx, n_Ry, n_Rx]`.

use nalgebra::{
    DMatrix, DVector, Matrix3, Matrix4, Matrix6, RowVector3, SMatrix, Vector3, Vector4,
};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kinematics::{extract_params, local_velocity, ParamContext, UpaOffset};
use crate::lie::{adjoint, adjoint_inv, exp_map, right_jacobian, skew, Pose, Twist};
use crate::waveform::{
    apply_pilots, augment, augment_matrix, channel_structure, PhysicalParams, PilotMatrix, ReGrid,
    UpaConfig, SPEED_OF_LIGHT,
};

pub type Matrix4x6 = SMatrix<f64, 4, 6>;

/// Below this `x^2 + y^2` (m^2) the target sits on the array axis.
const AXIS_TOL: f64 = 1e-9;

/// Per-entry index vectors of the stacked channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantSelectors {
    pub ell: DVector<f64>,
    pub k: DVector<f64>,
    /// Columns `[n_Ty, n_Tx, n_Ry, n_Rx]`.
    pub n1: DMatrix<f64>,
    /// `n1` with columns cyclically shifted, used by the polar-angle column.
    pub n2: DMatrix<f64>,
}

impl ConstantSelectors {
    pub fn new(upa: &UpaConfig, grid: &ReGrid) -> Self {
        let (nt, nr) = (upa.n_t(), upa.n_r());
        let len = grid.len() * nt * nr;
        let els = grid.elements();
        let ell = DVector::from_fn(len, |i, _| els[i / (nt * nr)].0 as f64);
        let k = DVector::from_fn(len, |i, _| els[i / (nt * nr)].1 as f64);
        let n1 = DMatrix::from_fn(len, 4, |i, c| {
            let t = (i / nr) % nt;
            let r = i % nr;
            (match c {
                0 => t / upa.nt_x,
                1 => t % upa.nt_x,
                2 => r / upa.nr_x,
                _ => r % upa.nr_x,
            }) as f64
        });
        let n2 = &n1 * DMatrix::from_column_slice(4, 4, Self::shift().as_slice());
        Self { ell, k, n1, n2 }
    }

    /// Maps `[f1, f2, f3, f4]` to `[f2, f3, f4, f1]`.
    pub fn shift() -> Matrix4<f64> {
        Matrix4::new(
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 0.0,
        )
    }

    pub fn f_phi(phi: f64) -> Vector4<f64> {
        let (s, c) = phi.sin_cos();
        Vector4::new(c, -s, -c, s)
    }
}

/// Columns `[d/dtau, d/dphi, d/dtheta, d/dmu]` of the channel, with `|b|`
/// following the inverse-square range law through `tau`.
pub fn jac_h_wrt_zeta(
    zeta: &PhysicalParams,
    upa: &UpaConfig,
    grid: &ReGrid,
    sel: &ConstantSelectors,
) -> DMatrix<Complex64> {
    let v = channel_structure(zeta, upa, grid);
    let j = Complex64::i();
    let b = zeta.b;
    let f = ConstantSelectors::f_phi(zeta.phi);
    let az = &sel.n1 * f;
    let pol = &sel.n2 * f;
    let amp = 1.0 / (j * PI * grid.f0 * zeta.tau);
    let c_tau = -j * 2.0 * PI * b * grid.f0;
    let c_phi = -j * PI * b * zeta.theta.sin();
    let c_theta = j * PI * b * zeta.theta.cos();
    let c_mu = j * 2.0 * PI * b * grid.ts;
    DMatrix::from_fn(v.len(), 4, |i, c| match c {
        0 => c_tau * v[i] * (sel.ell[i] + amp),
        1 => c_phi * v[i] * az[i],
        2 => c_theta * v[i] * pol[i],
        _ => c_mu * v[i] * sel.k[i],
    })
}

/// Right-perturbation Jacobian of `[tau, phi, theta, mu]` with respect to `T_sp`.
pub fn jac_zeta_wrt_pose(
    t_sp: &Pose,
    v_p_local: &Vector3<f64>,
    v_s_local: &Vector3<f64>,
    fc: f64,
) -> Result<Matrix4x6> {
    let r = t_sp.trans;
    let rot = t_sp.rot;
    let rho2 = r.norm_squared();
    let rho = rho2.sqrt();
    if !(rho >= crate::waveform::MIN_RANGE) {
        return Err(Error::DegenerateRange { range: rho });
    }
    let planar = r.x * r.x + r.y * r.y;
    if planar < AXIS_TOL {
        return Err(Error::PolarSingularity(planar));
    }

    let rt = r.transpose();
    let u = rot * v_p_local - v_s_local;
    let proj = Matrix3::identity() - r * rt / rho2;

    let d_tau = rt * rot * (2.0 / (SPEED_OF_LIGHT * rho));
    let d_phi = RowVector3::new(-r.y, r.x, 0.0) * rot / planar;
    let d_theta = -(Vector3::z() - r * (r.z / rho2)).transpose() * rot / planar.sqrt();
    let k_mu = 2.0 * fc / (SPEED_OF_LIGHT * rho);
    let d_mu_nu = u.transpose() * proj * rot * k_mu;
    let d_mu_om = -(rt * rot * skew(v_p_local)) * k_mu;

    let mut out = Matrix4x6::zeros();
    out.fixed_view_mut::<1, 3>(0, 0).copy_from(&d_tau);
    out.fixed_view_mut::<1, 3>(1, 0).copy_from(&d_phi);
    out.fixed_view_mut::<1, 3>(2, 0).copy_from(&d_theta);
    out.fixed_view_mut::<1, 3>(3, 0).copy_from(&d_mu_nu);
    out.fixed_view_mut::<1, 3>(3, 3).copy_from(&d_mu_om);
    Ok(out)
}

pub(crate) fn to_dyn<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Transition Jacobian `Ad_{Exp(-xi_p dt)}`.
pub fn jac_state_f(xi_p: &Twist, dt: f64) -> Matrix6<f64> {
    adjoint(&exp_map(&(-*xi_p), dt))
}

/// Control-noise Jacobian `-Ad_{T}^{-1} J_r(xi_s dt) dt` at the predicted pose.
pub fn jac_control_g(t_sp_pred: &Pose, xi_s: &Twist, dt: f64) -> Matrix6<f64> {
    -adjoint_inv(t_sp_pred) * right_jacobian(&(*xi_s * dt)) * dt
}

/// Everything that maps a relative pose and a UAV twist to a measurement.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    pub upa: UpaConfig,
    pub grid: ReGrid,
    pub pilots: PilotMatrix,
    pub offset: UpaOffset,
    pub a_const: f64,
    pub phase: f64,
    /// Nominal GU twist.
    pub xi_p: Twist,
    pub selectors: ConstantSelectors,
}

#[derive(Clone, Debug)]
pub struct JacobianBundle {
    pub j_h_zeta: DMatrix<Complex64>,
    pub j_zeta_t: Matrix4x6,
    pub f: Matrix6<f64>,
    pub g: Matrix6<f64>,
    pub psi: Matrix4x6,
    pub h: DMatrix<f64>,
}

impl MeasurementModel {
    pub fn new(
        upa: UpaConfig,
        grid: ReGrid,
        pilots: PilotMatrix,
        offset: UpaOffset,
        a_const: f64,
        phase: f64,
        xi_p: Twist,
    ) -> Result<Self> {
        upa.validate()?;
        if pilots.n_re() != grid.len() || pilots.n_t() != upa.n_t() {
            return Err(Error::ShapeMismatch(format!(
                "pilots {}x{} vs grid {} REs and {} Tx antennas",
                pilots.n_re(),
                pilots.n_t(),
                grid.len(),
                upa.n_t()
            )));
        }
        let selectors = ConstantSelectors::new(&upa, &grid);
        Ok(Self {
            upa,
            grid,
            pilots,
            offset,
            a_const,
            phase,
            xi_p,
            selectors,
        })
    }

    /// Real measurement dimension `2 M N_R`.
    pub fn output_dim(&self) -> usize {
        2 * self.grid.len() * self.upa.n_r()
    }

    fn ctx(&self) -> ParamContext<'_> {
        ParamContext {
            offset: &self.offset,
            grid: &self.grid,
            a_const: self.a_const,
            phase: self.phase,
        }
    }

    pub fn params(&self, t_sp: &Pose, xi_s_next: &Twist) -> Result<PhysicalParams> {
        extract_params(t_sp, xi_s_next, &self.xi_p, &self.ctx())
    }

    /// Complex noiseless measurement `(X (x) I) h`.
    pub fn noiseless(&self, t_sp: &Pose, xi_s_next: &Twist) -> Result<DVector<Complex64>> {
        let zeta = self.params(t_sp, xi_s_next)?;
        let h = crate::waveform::channel_vector(&zeta, &self.upa, &self.grid);
        apply_pilots(&h, &self.pilots)
    }

    pub fn noiseless_augmented(&self, t_sp: &Pose, xi_s_next: &Twist) -> Result<DVector<f64>> {
        Ok(augment(&self.noiseless(t_sp, xi_s_next)?))
    }

    pub fn jac_zeta_t(&self, t_sp: &Pose, xi_s_next: &Twist) -> Result<Matrix4x6> {
        let v_s = local_velocity(xi_s_next, &self.offset.vector());
        let v_p = local_velocity(&self.xi_p, &Vector3::zeros());
        jac_zeta_wrt_pose(t_sp, &v_p, &v_s, self.grid.fc)
    }

    /// Augmented `d y / d zeta`, of shape `2 M N_R x 4`.
    pub fn jac_y_zeta(&self, zeta: &PhysicalParams) -> Result<DMatrix<f64>> {
        let jh = jac_h_wrt_zeta(zeta, &self.upa, &self.grid, &self.selectors);
        let mut jy = DMatrix::zeros(self.grid.len() * self.upa.n_r(), 4);
        for c in 0..4 {
            let col = apply_pilots(&jh.column(c).into_owned(), &self.pilots)?;
            jy.set_column(c, &col);
        }
        Ok(augment_matrix(&jy))
    }

    pub fn jac_measurement_h(&self, t_sp_pred: &Pose, xi_s_next: &Twist) -> Result<DMatrix<f64>> {
        let zeta = self.params(t_sp_pred, xi_s_next)?;
        let psi = self.jac_zeta_t(t_sp_pred, xi_s_next)?;
        Ok(self.jac_y_zeta(&zeta)? * to_dyn(&psi))
    }

    /// All Jacobians at the prediction `t_sp_pred`.
    pub fn bundle(
        &self,
        t_sp_pred: &Pose,
        xi_s: &Twist,
        xi_s_next: &Twist,
        dt: f64,
    ) -> Result<JacobianBundle> {
        let zeta = self.params(t_sp_pred, xi_s_next)?;
        let j_h_zeta = jac_h_wrt_zeta(&zeta, &self.upa, &self.grid, &self.selectors);
        let j_zeta_t = self.jac_zeta_t(t_sp_pred, xi_s_next)?;
        let h = self.jac_y_zeta(&zeta)? * to_dyn(&j_zeta_t);
        Ok(JacobianBundle {
            j_h_zeta,
            j_zeta_t,
            f: jac_state_f(&self.xi_p, dt),
            g: jac_control_g(t_sp_pred, xi_s, dt),
            psi: j_zeta_t,
            h,
        })
    }
}
