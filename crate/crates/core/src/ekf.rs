//! Extended Kalman filter on SE(3) for the relative pose `T_sp`.
//!
//! The augmented measurement noise is isotropic, so the correction is done
//! through the push-through identity `H^T (H P H^T + c I)^-1 = (H^T H P + c I)^-1 H^T`,
//! which keeps every inverse 6x6.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix6, SymmetricEigen};

use crate::error::{Error, Result};
use crate::jacobians::{jac_control_g, jac_state_f, MeasurementModel};
use crate::kinematics::evolve_relative;
use crate::lie::{Pose, Twist};
use crate::linalg::{project_psd, symmetrize};
use crate::waveform::PhysicalParams;

/// Innovation covariances with a larger condition number are rejected.
pub const MAX_INNOVATION_COND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterState {
    pub t_hat: Pose,
    /// Covariance in the right tangent space of `t_hat`.
    pub p: Matrix6<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamPosterior {
    pub zeta_hat: PhysicalParams,
    pub v: Matrix4<f64>,
}

pub fn predict(
    state: &FilterState,
    xi_s: &Twist,
    xi_p_nominal: &Twist,
    xi_w: &Matrix6<f64>,
    c_w: &Matrix6<f64>,
    dt: f64,
) -> FilterState {
    let t_pred = evolve_relative(&state.t_hat, xi_s, xi_p_nominal, &Twist::zero(), dt);
    let f = jac_state_f(xi_p_nominal, dt);
    let g = jac_control_g(&t_pred, xi_s, dt);
    let p = f * state.p * f.transpose() + g * xi_w * g.transpose() + c_w;
    FilterState {
        t_hat: t_pred,
        p: symmetrize(&p),
    }
}

pub fn predict_params(
    state: &FilterState,
    xi_s_next: &Twist,
    model: &MeasurementModel,
) -> Result<ParamPosterior> {
    let zeta_hat = model.params(&state.t_hat, xi_s_next)?;
    let psi = model.jac_zeta_t(&state.t_hat, xi_s_next)?;
    Ok(ParamPosterior {
        zeta_hat,
        v: symmetrize(&(psi * state.p * psi.transpose())),
    })
}

/// Correction with augmented noise covariance `meas_var * I`.
pub fn update(
    state: &FilterState,
    y_aug: &DVector<f64>,
    h: &DMatrix<f64>,
    meas_var: f64,
    g_pred: &DVector<f64>,
) -> Result<FilterState> {
    if h.ncols() != 6 || h.nrows() != y_aug.len() || g_pred.len() != y_aug.len() {
        return Err(Error::ShapeMismatch(format!(
            "H {}x{}, y {}, g {}",
            h.nrows(),
            h.ncols(),
            y_aug.len(),
            g_pred.len()
        )));
    }
    if !(meas_var > 0.0) {
        return Err(Error::SingularInnovation(f64::INFINITY));
    }
    let hth = h.tr_mul(h);
    let hth6 = Matrix6::from_iterator(hth.iter().copied());
    let p = state.p;

    // eigenvalues of H P H^T beyond the zero block are those of P^(1/2) H^T H P^(1/2)
    let p_half = crate::lie::psd_sqrt(&p)?;
    let lam_max = SymmetricEigen::new(symmetrize(&(p_half * hth6 * p_half)))
        .eigenvalues
        .max()
        .max(0.0);
    let cond = if h.nrows() > 6 {
        (meas_var + lam_max) / meas_var
    } else {
        let s = symmetrize(&(h * DMatrix::from_column_slice(6, 6, p.as_slice()) * h.transpose()))
            + DMatrix::identity(h.nrows(), h.nrows()) * meas_var;
        let eig = SymmetricEigen::new(s).eigenvalues;
        eig.max() / eig.min().max(0.0)
    };
    if !(cond <= MAX_INNOVATION_COND) {
        return Err(Error::SingularInnovation(cond));
    }

    let inner = hth6 * p + Matrix6::identity() * meas_var;
    let inner_inv = inner.try_inverse().ok_or(Error::SingularInnovation(cond))?;
    let innovation = y_aug - g_pred;
    let ht_nu = h.tr_mul(&innovation);
    let gain_times_nu = p * inner_inv * nalgebra::Vector6::from_iterator(ht_nu.iter().copied());
    // K H P = P (H^T H P + c I)^-1 H^T H P
    let khp = p * inner_inv * hth6 * p;
    let p_new = project_psd(&(p - khp));
    Ok(FilterState {
        t_hat: state.t_hat.plus(&Twist(gain_times_nu)),
        p: p_new,
    })
}
