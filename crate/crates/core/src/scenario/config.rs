//! Scenario configuration, loaded from TOML.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::control::{ControlSettings, MotionLimits};
use crate::error::{Error, Result};
use crate::kinematics::UpaOffset;
use crate::lie::{Pose, Twist};
use crate::waveform::{radar_constant, ReGrid, UpaConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Optimized,
    Parallel,
    Diagonal,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Optimized, Policy::Parallel, Policy::Diagonal];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Optimized => "optimized",
            Policy::Parallel => "parallel",
            Policy::Diagonal => "diagonal",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimized" => Ok(Policy::Optimized),
            "parallel" => Ok(Policy::Parallel),
            "diagonal" => Ok(Policy::Diagonal),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformSection {
    /// Carrier frequency (Hz).
    pub fc: f64,
    /// Subcarrier spacing (Hz).
    pub f0: f64,
    /// Cyclic-prefix share of the OFDM symbol.
    pub guard_fraction: f64,
    pub n_subcarriers: u32,
    pub n_symbols: u32,
    pub n_re: u32,
    pub sigma_rcs: f64,
    pub pilot_power: f64,
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            fc: 2.4e9,
            f0: 15e3,
            guard_fraction: 0.07,
            n_subcarriers: 32,
            n_symbols: 10,
            n_re: 32,
            sigma_rcs: 0.5,
            pilot_power: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// When false the world is simulated without any noise; the filter keeps its covariances.
    pub enabled: bool,
    /// Receiver noise std. If absent it is derived from `snr_db` at the initial range.
    pub sigma_z: Option<f64>,
    pub snr_db: f64,
    /// Diagonal of the control-noise covariance.
    pub xi_w: [f64; 6],
    /// Diagonal of the pose-noise covariance.
    pub c_w: [f64; 6],
    /// Diagonal of the initial filter covariance.
    pub p0: [f64; 6],
}

impl Default for NoiseSection {
    fn default() -> Self {
        let (v, w) = (0.05f64.powi(2), 0.005f64.powi(2));
        Self {
            enabled: true,
            sigma_z: None,
            snr_db: 10.0,
            xi_w: [v, v, v, w, w, w],
            c_w: [1e-4; 6],
            p0: [25.0, 25.0, 25.0, 0.01, 0.01, 0.01],
        }
    }
}

/// How the filter is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Coarse GU position `estimate_position` with the true UAV pose.
    Coarse,
    /// The true relative pose.
    Perfect,
    /// A draw from the prior `N(T_sp, P0)`, as required for consistency tests.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub uav_position: [f64; 3],
    /// Row-major UAV attitude.
    pub uav_rotation: [[f64; 3]; 3],
    pub uav_twist: [f64; 6],
    pub gu_position: [f64; 3],
    pub gu_speed: f64,
    /// Direction of travel in the GU body frame, counterclockwise from +x (deg).
    pub gu_heading_deg: f64,
    pub estimate_position: [f64; 3],
    pub init: InitMode,
    pub upa_offset: [f64; 3],
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            uav_position: [200.0, 0.0, 150.0],
            uav_rotation: [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]],
            uav_twist: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            gu_position: [200.0, 150.0, 0.0],
            gu_speed: 4.0,
            gu_heading_deg: 180.0,
            estimate_position: [200.0, 170.0, 0.0],
            init: InitMode::Coarse,
            upa_offset: UpaOffset::default().s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub policy: Policy,
    pub seed: u64,
    pub mc_runs: usize,
    pub n_epochs: usize,
    pub dt: f64,
    /// Per-epoch velocity change used by the heuristic policies, as a share of `min(a_l, v)`.
    pub ramp_fraction: f64,
    /// Episodes failing above this share make `run` exit with a partial-failure code.
    pub max_failure_rate: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            policy: Policy::Optimized,
            seed: 1,
            mc_runs: 50,
            n_epochs: 200,
            dt: 0.25,
            ramp_fraction: 0.9,
            max_failure_rate: 0.05,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub run: RunSection,
    pub array: UpaConfig,
    pub waveform: WaveformSection,
    pub noise: NoiseSection,
    pub geometry: GeometrySection,
    pub limits: MotionLimits,
    pub control: ControlSettings,
}

fn diag6(d: &[f64; 6]) -> Matrix6<f64> {
    Matrix6::from_diagonal(&Vector6::from_row_slice(d))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.n_epochs == 0 {
            return Err(Error::Config("n_epochs must be at least 1".into()));
        }
        if !(r.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", r.dt)));
        }
        if r.mc_runs == 0 {
            return Err(Error::Config("mc_runs must be at least 1".into()));
        }
        if !(r.ramp_fraction > 0.0 && r.ramp_fraction <= 1.0) {
            return Err(Error::Config("ramp_fraction must lie in (0, 1]".into()));
        }
        self.array.validate()?;
        self.limits.validate()?;
        self.grid()?;
        let n = &self.noise;
        let psd = |d: &[f64; 6]| d.iter().all(|v| v.is_finite() && *v >= 0.0);
        if !psd(&n.xi_w) || !psd(&n.c_w) {
            return Err(Error::Config(
                "noise variances must be finite and non-negative".into(),
            ));
        }
        if !n.p0.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Config("p0 must be positive definite".into()));
        }
        if let Some(s) = n.sigma_z {
            if !(s > 0.0) {
                return Err(Error::Config(format!("sigma_z must be positive, got {s}")));
            }
        }
        let rot = self.uav_rotation();
        if (rot.transpose() * rot - Matrix3::identity()).amax() > 1e-9
            || (rot.determinant() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(
                "uav_rotation is not a rotation matrix".into(),
            ));
        }
        if !(self.waveform.pilot_power > 0.0) || !(self.waveform.sigma_rcs > 0.0) {
            return Err(Error::Config(
                "pilot_power and sigma_rcs must be positive".into(),
            ));
        }
        if !(self.control.n_samples >= 1) {
            return Err(Error::Config("control.n_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ReGrid> {
        let w = &self.waveform;
        ReGrid::diagonal(
            w.n_subcarriers,
            w.n_symbols,
            w.n_re,
            w.f0,
            w.guard_fraction,
            w.fc,
        )
    }

    pub fn uav_rotation(&self) -> Matrix3<f64> {
        let m = &self.geometry.uav_rotation;
        Matrix3::from_fn(|i, j| m[i][j])
    }

    pub fn uav_pose(&self) -> Pose {
        Pose::new(
            self.uav_rotation(),
            Vector3::from(self.geometry.uav_position),
        )
    }

    pub fn gu_pose(&self) -> Pose {
        Pose::from_translation(Vector3::from(self.geometry.gu_position))
    }

    pub fn gu_twist(&self) -> Twist {
        let g = &self.geometry;
        let h = g.gu_heading_deg * PI / 180.0;
        Twist::from_slice(&[
            g.gu_speed * h.cos(),
            g.gu_speed * h.sin(),
            0.0,
            0.0,
            0.0,
            0.0,
        ])
    }

    pub fn initial_twist(&self) -> Twist {
        Twist::from_slice(&self.geometry.uav_twist)
    }

    pub fn offset(&self) -> UpaOffset {
        UpaOffset {
            s: self.geometry.upa_offset,
        }
    }

    pub fn a_const(&self) -> f64 {
        radar_constant(self.waveform.fc, self.waveform.sigma_rcs)
    }

    /// Receiver noise std: explicit, or the one giving `snr_db` per RE at the initial range.
    pub fn sigma_z(&self) -> f64 {
        self.noise.sigma_z.unwrap_or_else(|| {
            let rho = (self.gu_pose().trans - self.uav_pose().trans).norm();
            let b = self.a_const() / (rho * rho);
            (b * b * self.waveform.pilot_power / 10f64.powf(self.noise.snr_db / 10.0)).sqrt()
        })
    }

    /// Variance of each entry of the real augmented measurement noise.
    pub fn meas_var(&self) -> f64 {
        0.5 * self.sigma_z().powi(2)
    }

    pub fn xi_w(&self) -> Matrix6<f64> {
        diag6(&self.noise.xi_w)
    }

    pub fn c_w(&self) -> Matrix6<f64> {
        diag6(&self.noise.c_w)
    }

    pub fn p0(&self) -> Matrix6<f64> {
        diag6(&self.noise.p0)
    }
}
