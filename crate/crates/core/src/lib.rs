//! UAV-mounted radar tracking of a ground user on SE(3): channel model, error-state EKF,
//! conditional PCRB and semidefinite-relaxation control design.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod cpcrb;
pub mod ekf;
pub mod error;
pub mod jacobians;
pub mod kinematics;
pub mod lie;
pub mod linalg;
pub mod scenario;
pub mod verify;
pub mod waveform;

pub use error::{Error, Result};
pub use lie::{Homogeneous, Pose, Twist};
