//! One closed-loop episode: world truth, EKF, CPCRB recursion and controller.

use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector4, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::config::{InitMode, Policy, ScenarioConfig};
use super::policy::{policy_diagonal, policy_optimized, policy_parallel, ControllerInput};
use crate::cpcrb::{
    cpcrb_params, cpcrb_pose, measurement_information, prior_information, process_noise_prime,
    FimState,
};
use crate::ekf::{predict, update, FilterState};
use crate::error::{Error, Result};
use crate::jacobians::{jac_state_f, MeasurementModel};
use crate::kinematics::evolve_relative;
use crate::lie::{adjoint_inv, exp_map, right_minus, sample_pose_noise, Pose, Twist};
use crate::linalg::{spd_inverse, symmetrize};
use crate::waveform::{augment, build_pilot_matrix, channel_vector, synthesize_measurement};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub t_sp: Pose,
    pub t_hat: Pose,
    pub zeta: Vector4<f64>,
    pub zeta_hat: Vector4<f64>,
    pub cpcrb_t: Vector6<f64>,
    pub cpcrb_zeta: Vector4<f64>,
    pub logdet_cpcrb_t: f64,
    /// Twist chosen at this epoch and applied over the next interval.
    pub twist: Twist,
    pub uav_position: Vector3<f64>,
    pub gu_position: Vector3<f64>,
    /// GU position implied by the estimate and the known UAV pose.
    pub gu_estimate: Vector3<f64>,
    /// Normalized estimation error squared of the posterior.
    pub nees: f64,
    /// Smallest eigenvalue of `E^-1 - CPCRB(T)`; never negative up to rounding.
    pub bound_gap: f64,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub records: Vec<EpochRecord>,
    /// Set if the episode stopped early; `records` then holds the completed epochs.
    pub failure: Option<Error>,
}

impl EpisodeTrace {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Independent world and controller streams for episode `run`.
pub fn episode_rngs(seed: u64, run: usize) -> (ChaCha20Rng, ChaCha20Rng) {
    let mut world = ChaCha20Rng::seed_from_u64(seed);
    world.set_stream(2 * run as u64);
    let mut ctrl = ChaCha20Rng::seed_from_u64(seed);
    ctrl.set_stream(2 * run as u64 + 1);
    (world, ctrl)
}

fn sample_diag<R: Rng + ?Sized>(var: &[f64; 6], rng: &mut R) -> Twist {
    Twist(Vector6::from_fn(|i, _| {
        var[i].sqrt() * rng.sample::<f64, _>(StandardNormal)
    }))
}

fn min_eig(m: &Matrix6<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Runs episode `run` of the configured policy. Singularities end the episode and are
/// recorded in the trace rather than returned.
pub fn run_episode(cfg: &ScenarioConfig, policy: Policy, run: usize) -> EpisodeTrace {
    let (mut world_rng, mut ctrl_rng) = episode_rngs(cfg.run.seed, run);
    let mut records = Vec::with_capacity(cfg.run.n_epochs);
    let failure = simulate(cfg, policy, &mut world_rng, &mut ctrl_rng, &mut records).err();
    EpisodeTrace { records, failure }
}

fn simulate(
    cfg: &ScenarioConfig,
    policy: Policy,
    world_rng: &mut ChaCha20Rng,
    ctrl_rng: &mut ChaCha20Rng,
    records: &mut Vec<EpochRecord>,
) -> Result<()> {
    let dt = cfg.run.dt;
    let noisy = cfg.noise.enabled;
    let grid = cfg.grid()?;
    let phase = world_rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let pilots = build_pilot_matrix(&cfg.array, &grid, cfg.waveform.pilot_power, world_rng)?;
    let xi_p = cfg.gu_twist();
    let model = MeasurementModel::new(
        cfg.array,
        grid,
        pilots,
        cfg.offset(),
        cfg.a_const(),
        phase,
        xi_p,
    )?;
    let (xi_w, c_w, meas_var) = (cfg.xi_w(), cfg.c_w(), cfg.meas_var());
    let sigma_z = if noisy { cfg.sigma_z() } else { 0.0 };

    let mut t_ws = cfg.uav_pose();
    let mut t_sp = t_ws.inverse() * cfg.gu_pose();
    let mut xi_s = cfg.initial_twist();
    let p0 = cfg.p0();
    let t_hat0 = match cfg.geometry.init {
        InitMode::Perfect => t_sp,
        InitMode::Coarse => {
            let guess = Pose::new(
                cfg.gu_pose().rot,
                Vector3::from(cfg.geometry.estimate_position),
            );
            t_ws.inverse() * guess
        }
        InitMode::Sampled => t_sp.plus(&sample_pose_noise(&p0, world_rng)?),
    };
    let mut filt = FilterState {
        t_hat: t_hat0,
        p: p0,
    };
    let mut fim = FimState {
        info: spd_inverse(&p0, "initial covariance", crate::cpcrb::MAX_FIM_COND)?,
    };

    for epoch in 1..=cfg.run.n_epochs {
        let fail = |e: Error| Error::EpisodeFailed {
            epoch,
            source: Box::new(e),
        };

        // truth
        let (w_twist, w_pose) = if noisy {
            (
                sample_diag(&cfg.noise.xi_w, world_rng),
                sample_diag(&cfg.noise.c_w, world_rng),
            )
        } else {
            (Twist::zero(), Twist::zero())
        };
        let t_ws_prev = t_ws;
        let t_wp_prev = t_ws * t_sp;
        t_ws = t_ws * exp_map(&(xi_s + w_twist), dt);
        t_sp = evolve_relative(&t_sp, &xi_s, &xi_p, &w_twist, dt).plus(&w_pose);

        // prediction and prior information
        filt = predict(&filt, &xi_s, &xi_p, &xi_w, &c_w, dt);
        let f = jac_state_f(&xi_p, dt);
        let c_w_prime = process_noise_prime(&xi_w, &c_w, &adjoint_inv(&t_wp_prev), dt);
        let prior = prior_information(&fim, &f, &c_w_prime).map_err(fail)?;

        // next control
        let (next, fallback) = match policy {
            Policy::Parallel => (policy_parallel(cfg, epoch), false),
            Policy::Diagonal => (policy_diagonal(cfg, epoch), false),
            Policy::Optimized => {
                let input = ControllerInput {
                    prior_info: &prior,
                    t_pred: &filt.t_hat,
                    model: &model,
                    prev: xi_s,
                    r_now: &t_ws.rot,
                    r_prev: &t_ws_prev.rot,
                };
                let out = policy_optimized(cfg, &input, ctrl_rng);
                (out.twist, out.fallback.is_some())
            }
        };

        // measurement and correction
        let zeta = model.params(&t_sp, &next).map_err(fail)?;
        let h_true = channel_vector(&zeta, &model.upa, &model.grid);
        let y = augment(
            &synthesize_measurement(&h_true, &model.pilots, sigma_z, world_rng).map_err(fail)?,
        );
        let h = model.jac_measurement_h(&filt.t_hat, &next).map_err(fail)?;
        let g_pred = model
            .noiseless_augmented(&filt.t_hat, &next)
            .map_err(fail)?;
        let psi = model.jac_zeta_t(&filt.t_hat, &next).map_err(fail)?;
        filt = update(&filt, &y, &h, meas_var, &g_pred).map_err(fail)?;

        // bound
        fim = FimState {
            info: symmetrize(&(measurement_information(&h, meas_var) + prior)),
        };
        let bound = cpcrb_pose(&fim).map_err(fail)?;
        let bound_zeta = cpcrb_params(&fim, &psi).map_err(fail)?;
        let prior_cov =
            spd_inverse(&prior, "prior information", crate::cpcrb::MAX_FIM_COND).map_err(fail)?;

        let zeta_hat = model.params(&filt.t_hat, &next).map_err(fail)?;
        let err = right_minus(&t_sp, &filt.t_hat).map_err(fail)?;
        let p_inv = spd_inverse(&filt.p, "posterior covariance", 1e16).map_err(fail)?;
        let nees = err.0.dot(&(p_inv * err.0));
        let logdet = bound.determinant().ln();
        if !nees.is_finite() || !logdet.is_finite() {
            return Err(fail(Error::NotPsd));
        }

        records.push(EpochRecord {
            t_sp,
            t_hat: filt.t_hat,
            zeta: zeta.zeta(),
            zeta_hat: zeta_hat.zeta(),
            cpcrb_t: bound.diagonal(),
            cpcrb_zeta: bound_zeta.diagonal(),
            logdet_cpcrb_t: logdet,
            twist: next,
            uav_position: t_ws.trans,
            gu_position: (t_ws * t_sp).trans,
            gu_estimate: t_ws.transform_point(&filt.t_hat.trans),
            nees,
            bound_gap: min_eig(&(prior_cov - bound)),
            fallback,
        });
        xi_s = next;
    }
    Ok(())
}
