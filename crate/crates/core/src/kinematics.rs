//! Rigid-body evolution of the UAV, the ground user and their relative pose,
//! and extraction of the radar parameters from the relative configuration.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{exp_map, Pose, Twist};
use crate::waveform::{channel_gain, PhysicalParams, ReGrid, MIN_RANGE, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldState {
    pub t_ws: Pose,
    pub t_wp: Pose,
    /// UAV body twist currently applied.
    pub xi_s: Twist,
    /// GU body twist. The angular part is always zero.
    pub xi_p: Twist,
}

impl WorldState {
    pub fn new(t_ws: Pose, t_wp: Pose, xi_s: Twist, xi_p: Twist) -> Self {
        let mut xi_p = xi_p;
        xi_p.0.fixed_rows_mut::<3>(3).fill(0.0);
        Self {
            t_ws,
            t_wp,
            xi_s,
            xi_p,
        }
    }

    pub fn relative(&self) -> Pose {
        self.t_ws.inverse() * self.t_wp
    }
}

/// Midpoint of the UPA in the UAV body frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpaOffset {
    pub s: [f64; 3],
}

impl Default for UpaOffset {
    fn default() -> Self {
        Self { s: [0.2, 0.3, 0.1] }
    }
}

impl UpaOffset {
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::from(self.s)
    }
}

pub fn propagate_world(t: &Pose, xi_body: &Twist, dt: f64) -> Pose {
    t * &exp_map(xi_body, dt)
}

/// `Exp(-(xi_s + xi_noise) dt) * T_sp * Exp(xi_p dt)`.
pub fn evolve_relative(t_sp: &Pose, xi_s: &Twist, xi_p: &Twist, xi_noise: &Twist, dt: f64) -> Pose {
    let left = exp_map(&(-(*xi_s + *xi_noise)), dt);
    (&left * t_sp) * exp_map(xi_p, dt)
}

/// Velocity of a body-fixed point under a body twist: `nu + omega x p`.
pub fn local_velocity(xi: &Twist, point: &Vector3<f64>) -> Vector3<f64> {
    xi.nu() + xi.omega().cross(point)
}

/// Range rate `<R v_p - v_s, r> / |r|` with both velocities in their own body frames.
pub fn radial_velocity(
    t_sp: &Pose,
    v_p_local: &Vector3<f64>,
    v_s_local: &Vector3<f64>,
) -> Result<f64> {
    let rho = t_sp.trans.norm();
    if !(rho >= MIN_RANGE) {
        return Err(Error::DegenerateRange { range: rho });
    }
    Ok((t_sp.rot * v_p_local - v_s_local).dot(&t_sp.trans) / rho)
}

/// Everything needed to turn a relative pose into a channel.
#[derive(Clone, Copy, Debug)]
pub struct ParamContext<'a> {
    pub offset: &'a UpaOffset,
    pub grid: &'a ReGrid,
    pub a_const: f64,
    pub phase: f64,
}

pub fn extract_params(
    t_sp: &Pose,
    xi_s_next: &Twist,
    xi_p_next: &Twist,
    ctx: &ParamContext<'_>,
) -> Result<PhysicalParams> {
    let r = t_sp.trans;
    let rho = r.norm();
    if !(rho >= MIN_RANGE) {
        return Err(Error::DegenerateRange { range: rho });
    }
    let theta = (r.z / rho).clamp(-1.0, 1.0).acos();
    let phi = if r.x == 0.0 && r.y == 0.0 {
        0.0
    } else {
        r.y.atan2(r.x)
    };
    let v_s = local_velocity(xi_s_next, &ctx.offset.vector());
    let v_p = local_velocity(xi_p_next, &Vector3::zeros());
    let v_rad = radial_velocity(t_sp, &v_p, &v_s)?;
    let b: Complex64 = channel_gain(rho, ctx.phase, ctx.a_const)?;
    Ok(PhysicalParams {
        tau: 2.0 * rho / SPEED_OF_LIGHT,
        phi,
        theta,
        mu: 2.0 * v_rad * ctx.grid.fc / SPEED_OF_LIGHT,
        b,
    })
}
