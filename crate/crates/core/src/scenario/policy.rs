//! Trajectory policies: two fixed heuristics and the CPCRB-driven controller.

use nalgebra::{Matrix6, Vector3};
use rand::Rng;

use super::config::{Policy, ScenarioConfig};
use crate::control::{optimize_control, ConstraintSet, ControlOutcome, ControlProblem};
use crate::jacobians::MeasurementModel;
use crate::lie::{Pose, Twist};

/// Body twist the heuristic policies settle on.
pub fn heuristic_target(cfg: &ScenarioConfig, policy: Policy) -> Twist {
    let r_ws = cfg.uav_rotation();
    let v_gu = cfg.gu_pose().rot * cfg.gu_twist().nu();
    let speed = v_gu.norm();
    let world = match policy {
        Policy::Diagonal => {
            let along = Vector3::new(v_gu.x, v_gu.y, 0.0)
                .try_normalize(1e-12)
                .unwrap_or_else(Vector3::x);
            let mut toward = cfg.gu_pose().trans - cfg.uav_pose().trans;
            toward.z = 0.0;
            toward -= along * along.dot(&toward);
            let toward = toward
                .try_normalize(1e-9)
                .unwrap_or_else(|| Vector3::new(-along.y, along.x, 0.0));
            (along + toward) * (speed / 2f64.sqrt())
        }
        _ => v_gu,
    };
    Twist::new(r_ws.transpose() * world, Vector3::zeros())
}

/// Twist chosen at `epoch` (1-based): a straight ramp from the initial twist to the target,
/// moving at most `ramp_fraction * min(a_l, v)` per epoch.
fn ramp(cfg: &ScenarioConfig, target: Twist, epoch: usize) -> Twist {
    let start = cfg.initial_twist();
    let gap = target - start;
    let dist = gap.0.norm();
    if dist == 0.0 {
        return target;
    }
    let step = cfg.run.ramp_fraction * cfg.limits.a_l.min(cfg.limits.v);
    let share = (epoch as f64 * step / dist).min(1.0);
    start + gap * share
}

pub fn policy_parallel(cfg: &ScenarioConfig, epoch: usize) -> Twist {
    ramp(cfg, heuristic_target(cfg, Policy::Parallel), epoch)
}

pub fn policy_diagonal(cfg: &ScenarioConfig, epoch: usize) -> Twist {
    ramp(cfg, heuristic_target(cfg, Policy::Diagonal), epoch)
}

/// What the controller sees at one epoch.
#[derive(Clone, Copy, Debug)]
pub struct ControllerInput<'a> {
    pub prior_info: &'a Matrix6<f64>,
    pub t_pred: &'a Pose,
    pub model: &'a MeasurementModel,
    pub prev: Twist,
    /// UAV attitude now and one epoch earlier.
    pub r_now: &'a nalgebra::Matrix3<f64>,
    pub r_prev: &'a nalgebra::Matrix3<f64>,
}

pub fn policy_optimized<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    input: &ControllerInput<'_>,
    rng: &mut R,
) -> ControlOutcome {
    let problem = ControlProblem {
        prior_info: input.prior_info,
        t_pred: input.t_pred,
        model: input.model,
        meas_var: cfg.meas_var(),
        cons: ConstraintSet {
            limits: cfg.limits,
            prev: input.prev,
            s: cfg.offset().vector(),
            r1: *input.r_now,
            r2: *input.r_prev,
        },
    };
    optimize_control(&problem, &cfg.control, rng)
}
