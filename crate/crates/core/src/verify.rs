//! Self-check batteries: finite-difference Jacobians, Lie identities, the determinant
//! separation, SDR soundness, the bound recursion and filter consistency.
//!
//! Each battery returns a [`CheckOutcome`]; the command line prints them as a table.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Matrix4, Matrix6, Vector3, Vector6};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{
    build_quadratic_form, partition_psi, solve_control_problem, ConstraintSet, ControlProblem,
    ControlSettings, MotionLimits, FREE_INDICES,
};
use crate::cpcrb::{fim_step, measurement_information, FimState};
use crate::jacobians::{jac_control_g, jac_h_wrt_zeta, jac_state_f, MeasurementModel};
use crate::kinematics::{evolve_relative, UpaOffset};
use crate::lie::{adjoint, exp_map, log_map, right_jacobian, so3_exp, Pose, Twist};
use crate::scenario::{monte_carlo, run_episode, InitMode, Policy, ScenarioConfig};
use crate::waveform::{
    build_pilot_matrix, channel_gain, channel_vector, radar_constant, PhysicalParams, ReGrid,
    UpaConfig, SPEED_OF_LIGHT,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Level {
    #[default]
    Fast,
    Full,
}

/// Deliberate corruption used to prove the batteries can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Scales the azimuth column of the channel Jacobian by 1.01.
    ChannelJacobian,
}

fn timed(
    name: &'static str,
    threshold: f64,
    f: impl FnOnce() -> (f64, bool, String),
) -> CheckOutcome {
    let start = Instant::now();
    let (metric, passed, detail) = f();
    CheckOutcome {
        name,
        passed,
        metric,
        threshold,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn default_grid() -> ReGrid {
    ReGrid::diagonal(32, 10, 32, 15e3, 0.07, 2.4e9).expect("default grid is valid")
}

/// A relative pose tens to hundreds of metres away, clear of the array axis.
pub fn random_relative_pose<R: Rng + ?Sized>(rng: &mut R) -> Pose {
    let dir = loop {
        let d: Vector3<f64> = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if d.norm() > 0.2 && (d.x * d.x + d.y * d.y).sqrt() / d.norm() > 0.2 {
            break d.normalize();
        }
    };
    let rot = so3_exp(&Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5)));
    Pose::new(rot, dir * rng.random_range(30.0..300.0))
}

fn random_twist<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Twist {
    Twist(Vector6::from_fn(|_, _| rng.random_range(-scale..scale)))
}

fn random_model<R: Rng + ?Sized>(rng: &mut R) -> MeasurementModel {
    let upa = UpaConfig::default();
    let grid = default_grid();
    let pilots = build_pilot_matrix(&upa, &grid, 1.0, rng).expect("valid pilots");
    let mut xi_p = random_twist(rng, 5.0);
    xi_p.0.fixed_rows_mut::<3>(3).fill(0.0);
    MeasurementModel::new(
        upa,
        grid,
        pilots,
        UpaOffset::default(),
        radar_constant(2.4e9, 0.5),
        rng.random_range(-PI..PI),
        xi_p,
    )
    .expect("consistent model")
}

/// Central differences of a vector-valued function of a 6-d right perturbation.
fn fd_pose<F: Fn(&Twist) -> DMatrix<f64>>(f: F, steps: &[f64; 6]) -> DMatrix<f64> {
    let cols: Vec<DMatrix<f64>> = (0..6)
        .map(|c| {
            let mut d = Vector6::zeros();
            d[c] = steps[c];
            (f(&Twist(d)) - f(&Twist(-d))) / (2.0 * steps[c])
        })
        .collect();
    DMatrix::from_fn(cols[0].nrows(), 6, |r, c| cols[c][(r, 0)])
}

/// Criterion-style Jacobian battery over `n` random configurations.
pub fn jacobian_battery(n: usize, seed: u64, fault: Fault) -> CheckOutcome {
    timed("jacobians vs central differences", 1e-4, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = [0.0f64; 5];
        for _ in 0..n {
            let model = random_model(&mut rng);
            let t = random_relative_pose(&mut rng);
            let xs = random_twist(&mut rng, 3.0);
            let dt = rng.random_range(0.05..0.5);
            let rho = t.trans.norm();
            let pos_steps = [1e-6 * rho, 1e-6 * rho, 1e-6 * rho, 1e-6, 1e-6, 1e-6];

            // channel Jacobian, columns
            let z0 = model.params(&t, &xs).expect("non-singular");
            let mut jh = jac_h_wrt_zeta(&z0, &model.upa, &model.grid, &model.selectors);
            if fault == Fault::ChannelJacobian {
                let scaled = jh.column(1) * Complex64::new(1.01, 0.0);
                jh.set_column(1, &scaled);
            }
            let h_of = |v: [f64; 4]| {
                let b = channel_gain(v[0] * SPEED_OF_LIGHT / 2.0, model.phase, model.a_const)
                    .expect("positive range");
                channel_vector(
                    &PhysicalParams {
                        tau: v[0],
                        phi: v[1],
                        theta: v[2],
                        mu: v[3],
                        b,
                    },
                    &model.upa,
                    &model.grid,
                )
            };
            let base = [z0.tau, z0.phi, z0.theta, z0.mu];
            let steps = [1e-6 * z0.tau, 1e-6, 1e-6, 1e-4];
            for c in 0..4 {
                let (mut p, mut m) = (base, base);
                p[c] += steps[c];
                m[c] -= steps[c];
                let fd = (h_of(p) - h_of(m)) / Complex64::new(2.0 * steps[c], 0.0);
                let an = jh.column(c).into_owned();
                worst[0] = worst[0].max((&fd - &an).norm() / an.norm().max(1e-300));
            }

            // parameter Jacobian, rows
            let jz = model.jac_zeta_t(&t, &xs).expect("non-singular");
            let fd = fd_pose(
                |d| {
                    let z = model.params(&t.plus(d), &xs).expect("non-singular").zeta();
                    DMatrix::from_column_slice(4, 1, z.as_slice())
                },
                &pos_steps,
            );
            for r in 0..4 {
                let a = jz.row(r);
                let f = fd.row(r);
                let err = (f - DMatrix::from_row_slice(1, 6, a.transpose().as_slice())).norm()
                    / f.norm().max(1e-300);
                worst[1] = worst[1].max(err);
            }

            // state-transition and control Jacobians
            let xp = model.xi_p;
            let nominal = evolve_relative(&t, &xs, &xp, &Twist::zero(), dt);
            let as_col = |tw: Twist| DMatrix::from_column_slice(6, 1, tw.0.as_slice());
            let fd_f = fd_pose(
                |d| {
                    as_col(
                        evolve_relative(&t.plus(d), &xs, &xp, &Twist::zero(), dt)
                            .minus(&nominal)
                            .expect("small"),
                    )
                },
                &[1e-6; 6],
            );
            let fd_g = fd_pose(
                |d| {
                    as_col(
                        evolve_relative(&t, &xs, &xp, d, dt)
                            .minus(&nominal)
                            .expect("small"),
                    )
                },
                &[1e-6; 6],
            );
            let f = jac_state_f(&xp, dt);
            let g = jac_control_g(&nominal, &xs, dt);
            worst[2] = worst[2].max(rel(&DMatrix::from_column_slice(6, 6, f.as_slice()), &fd_f));
            worst[3] = worst[3].max(rel(&DMatrix::from_column_slice(6, 6, g.as_slice()), &fd_g));

            // measurement Jacobian
            let h = model.jac_measurement_h(&t, &xs).expect("non-singular");
            let fd_h = fd_pose(
                |d| {
                    let y = model
                        .noiseless_augmented(&t.plus(d), &xs)
                        .expect("non-singular");
                    DMatrix::from_column_slice(y.len(), 1, y.as_slice())
                },
                &pos_steps,
            );
            worst[4] = worst[4].max(rel(&h, &fd_h));
        }
        let metric = worst.iter().copied().fold(0.0, f64::max);
        let detail = format!(
            "{n} configs; max rel err J_h {:.1e}, J_zeta {:.1e}, F {:.1e}, G {:.1e}, H {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        );
        (metric, metric < 1e-4, detail)
    })
}

/// Exp/Log round trip, adjoint identity and right-Jacobian checks, `n` samples each.
pub fn lie_battery(n: usize, seed: u64) -> CheckOutcome {
    timed("lie group identities", 1e-9, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut round, mut adj, mut jr) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n {
            let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let w = axis * rng.random_range(0.0..PI - 1e-2);
            let v = Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0));
            let xi = Twist::new(v, w);
            let back = log_map(&exp_map(&xi, 1.0)).expect("angle below pi");
            round = round.max((back.0 - xi.0).norm() / (1.0 + xi.0.norm()));

            let t = exp_map(&random_twist(&mut rng, 2.0), 1.0);
            let eta = random_twist(&mut rng, 1.0);
            let lhs = (t * exp_map(&eta, 1.0) * t.inverse()).to_matrix();
            let rhs = exp_map(&Twist(adjoint(&t) * eta.0), 1.0).to_matrix();
            adj = adj.max((lhs - rhs).norm());

            let base = random_twist(&mut rng, 1.0);
            let jac = right_jacobian(&base);
            let h = 1e-6;
            let mut fd = Matrix6::zeros();
            for c in 0..6 {
                let mut d = Vector6::zeros();
                d[c] = h;
                let plus =
                    log_map(&(exp_map(&base, 1.0).inverse() * exp_map(&(base + Twist(d)), 1.0)))
                        .expect("small");
                let minus =
                    log_map(&(exp_map(&base, 1.0).inverse() * exp_map(&(base - Twist(d)), 1.0)))
                        .expect("small");
                fd.set_column(c, &((plus.0 - minus.0) / (2.0 * h)));
            }
            jr = jr.max((fd - jac).norm() / jac.norm());
        }
        let passed = round < 1e-9 && adj < 1e-9 && jr < 1e-5;
        let detail = format!(
            "{n} samples; round trip {round:.1e}, adjoint {adj:.1e}, J_r {jr:.1e} (limit 1e-5)"
        );
        (round.max(adj), passed, detail)
    })
}

fn random_spd<R: Rng + ?Sized, const N: usize>(
    rng: &mut R,
    floor: f64,
) -> nalgebra::SMatrix<f64, N, N> {
    let a = nalgebra::SMatrix::<f64, N, N>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    a * a.transpose() + nalgebra::SMatrix::<f64, N, N>::identity() * floor
}

/// Separated log-det objective against a direct evaluation with an independently built `D(xi)`.
pub fn determinant_battery(n: usize, seed: u64) -> CheckOutcome {
    timed("determinant separation", 1e-8, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let t = random_relative_pose(&mut rng);
            let vp = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
            let s = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
            let prev = random_twist(&mut rng, 3.0);
            let part = partition_psi(&t, &vp, &prev, &s, 2.4e9).expect("non-singular");
            let e: Matrix6<f64> = random_spd(&mut rng, 0.5);
            let a_tilde: Matrix4<f64> = random_spd(&mut rng, 0.5);
            let form = build_quadratic_form(&e, &a_tilde, &part).expect("well posed");
            let xi = random_twist(&mut rng, 3.0).0;

            let e_inv = e.try_inverse().expect("PD");
            let (p1, p2) = (part.psi1(), part.psi2(&xi));
            let d0 = p1 * e_inv * p1.transpose();
            let d = p2 * e_inv * (p1 + p2).transpose() + p1 * e_inv * p2.transpose();
            let direct = -(a_tilde.try_inverse().expect("PD") + d0 + d)
                .determinant()
                .ln();
            let separated = form.neg_logdet(&xi);
            worst = worst.max((direct - separated).abs() / (1.0 + direct.abs()));
        }
        (
            worst,
            worst < 1e-8,
            format!("{n} instances; max relative difference {worst:.1e}"),
        )
    })
}

/// Woodbury against the D-submatrix recursion, and `CPCRB(T) <= E^-1` along an episode.
pub fn recursion_battery(n: usize, seed: u64) -> CheckOutcome {
    timed("bound recursion identity", 1e-9, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let prev = FimState {
                info: random_spd(&mut rng, 0.2),
            };
            let f =
                Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Matrix6::identity() * 2.0;
            let cw: Matrix6<f64> = random_spd::<_, 6>(&mut rng, 0.2) * 0.1;
            let h = DMatrix::from_fn(16, 6, |_, _| rng.random_range(-1.0..1.0));
            let var = rng.random_range(0.1..2.0);
            let step = fim_step(&prev, &f, &h, &cw, var).expect("well conditioned");
            let cw_inv = cw.try_inverse().expect("PD");
            let d11 = f.transpose() * cw_inv * f;
            let d12 = f.transpose() * cw_inv;
            let d22 = cw_inv + measurement_information(&h, var);
            let reference =
                d22 - d12.transpose() * (prev.info + d11).try_inverse().expect("PD") * d12;
            worst = worst.max((step.next.info - reference).norm() / reference.norm());
        }
        let mut cfg = ScenarioConfig::default();
        cfg.run.seed = seed;
        let ep = run_episode(&cfg, Policy::Parallel, 0);
        let gap = ep
            .records
            .iter()
            .map(|r| r.bound_gap)
            .fold(f64::INFINITY, f64::min);
        let ordered = !ep.failed() && gap > -1e-9;
        let detail = format!(
            "{n} instances; max relative difference {worst:.1e}; min eig(E^-1 - CPCRB) over {} epochs {gap:.1e}",
            ep.records.len()
        );
        (worst, worst < 1e-9 && ordered, detail)
    })
}

/// Summary of one SDR instance, exposed for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct SdrInstanceReport {
    pub rel_gap: f64,
    pub upper_bound: f64,
    pub best_random: f64,
    pub extracted: f64,
    pub grid_best: f64,
    pub grid_range: f64,
    pub feasible: bool,
}

/// One random epoch instance around the flight geometry.
fn sdr_instance<R: Rng + ?Sized>(rng: &mut R, n_random: usize) -> SdrInstanceReport {
    let model = random_model(rng);
    let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, -1.0));
    let yaw = rng.random_range(-PI..PI);
    let prev_w = rng.random_range(-0.1..0.1);
    let r2 = so3_exp(&Vector3::new(0.0, 0.0, yaw)) * flip;
    let r1 = so3_exp(&Vector3::new(0.0, 0.0, yaw - prev_w * 0.25)) * flip;
    let gu = Vector3::new(
        rng.random_range(-200.0..200.0),
        rng.random_range(-200.0..200.0),
        rng.random_range(-170.0..-130.0),
    );
    let t_pred = Pose::new(r1.transpose(), r1.transpose() * gu);
    let sp = rng.random_range(0.0..5.0);
    let hd = rng.random_range(-PI..PI);
    let prev = Twist::from_slice(&[sp * hd.cos(), sp * hd.sin(), 0.0, 0.0, 0.0, prev_w]);
    let cov: Matrix6<f64> = random_spd::<_, 6>(rng, 0.0)
        + Matrix6::from_diagonal(&Vector6::new(2.0, 2.0, 2.0, 1e-3, 1e-3, 1e-3));
    let prior = cov.try_inverse().expect("PD");
    let meas_var = 0.5 * (radar_constant(2.4e9, 0.5) / gu.norm_squared()).powi(2) / 10.0;
    let cons = ConstraintSet {
        limits: MotionLimits::default(),
        prev,
        s: UpaOffset::default().vector(),
        r1,
        r2,
    };
    let problem = ControlProblem {
        prior_info: &prior,
        t_pred: &t_pred,
        model: &model,
        meas_var,
        cons,
    };
    let sol = solve_control_problem(&problem, &ControlSettings::default(), rng)
        .expect("solvable instance");
    let q = &sol.qcqp;
    let region = &sol.region;

    // bounding box of the feasible set in (nu_x, nu_y, omega_z)
    let l = &cons.limits;
    let w_lo = (-l.v_a).max(prev.0[5] - l.a_a);
    let w_hi = l.v_a.min(prev.0[5] + l.a_a);
    let reach = l
        .a_l
        .min(l.v + (r1 - r2).norm() * prev.0.norm() + cons.s.norm() * (l.a_a + 2.0 * l.v_a));
    let lo = Vector3::new(prev.0[0] - reach, prev.0[1] - reach, w_lo);
    let hi = Vector3::new(prev.0[0] + reach, prev.0[1] + reach, w_hi);

    let mut best_random = f64::NEG_INFINITY;
    let mut found = 0;
    let mut tries = 0;
    while found < n_random && tries < 200 * n_random {
        tries += 1;
        let x = Vector3::from_fn(|i, _| rng.random_range(lo[i]..hi[i]));
        let xi = region.embed(&x);
        if q.is_feasible(&xi, 0.0) {
            found += 1;
            best_random = best_random.max(q.objective(&xi));
        }
    }
    let (mut grid_best, mut grid_worst) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..21 {
        for j in 0..21 {
            for k in 0..21 {
                let f = |a: usize, idx: usize| lo[idx] + (hi[idx] - lo[idx]) * a as f64 / 20.0;
                let xi = region.embed(&Vector3::new(f(i, 0), f(j, 1), f(k, 2)));
                if q.is_feasible(&xi, 0.0) {
                    let v = q.objective(&xi);
                    grid_best = grid_best.max(v);
                    grid_worst = grid_worst.min(v);
                }
            }
        }
    }
    debug_assert_eq!(FREE_INDICES.len(), 3);
    SdrInstanceReport {
        rel_gap: sol.relaxation.rel_gap,
        upper_bound: sol.relaxation.upper_bound,
        best_random,
        extracted: q.objective(&sol.twist),
        grid_best,
        grid_range: grid_best - grid_worst,
        feasible: q.is_feasible(&sol.twist, 1e-9),
    }
}

/// SDR soundness: duality gap, bound dominance, feasibility and near-optimality.
pub fn sdr_battery(n: usize, n_random: usize, seed: u64) -> CheckOutcome {
    timed("semidefinite relaxation soundness", 1e-7, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut gap, mut dominance, mut shortfall) = (0.0f64, f64::INFINITY, 0.0f64);
        let mut infeasible = 0;
        for _ in 0..n {
            let r = sdr_instance(&mut rng, n_random);
            gap = gap.max(r.rel_gap);
            let scale = 1.0 + r.upper_bound.abs();
            dominance = dominance.min((r.upper_bound - r.best_random.max(r.extracted)) / scale);
            let tol = 0.05 * r.grid_best.abs().max(r.grid_range);
            shortfall = shortfall.max((r.grid_best - r.extracted) / tol.max(1e-300) * 0.05);
            if !r.feasible {
                infeasible += 1;
            }
        }
        let passed = gap < 1e-7 && dominance > -1e-7 && shortfall <= 0.05 && infeasible == 0;
        let detail = format!(
            "{n} instances; max gap {gap:.1e}; min (bound - sampled)/scale {dominance:.1e}; \
             worst shortfall vs grid {:.2}%; infeasible {infeasible}",
            shortfall * 100.0
        );
        (gap, passed, detail)
    })
}

/// Average NEES of the default scenario, and the exactness of a noise-free run.
pub fn nees_battery(runs: usize, seed: u64) -> CheckOutcome {
    timed("filter consistency", 2.0, || {
        let mut cfg = ScenarioConfig::default();
        cfg.run.seed = seed;
        cfg.run.mc_runs = runs;
        let res = match monte_carlo(&cfg, cfg.run.policy) {
            Ok(r) => r,
            Err(e) => return (f64::INFINITY, false, format!("monte carlo failed: {e}")),
        };
        let nees = res.nees.iter().sum::<f64>() / res.nees.len() as f64;
        let ratio = (nees / 6.0).max(6.0 / nees);

        let mut exact = cfg.clone();
        exact.noise.enabled = false;
        exact.geometry.init = InitMode::Perfect;
        let ep = run_episode(&exact, Policy::Parallel, 0);
        let pos = ep
            .records
            .iter()
            .map(|r| (r.t_hat.trans - r.t_sp.trans).norm())
            .fold(0.0, f64::max);
        let passed = ratio <= 2.0 && !ep.failed() && pos < 1e-6;
        let detail = format!(
            "{} episodes ({} failed); mean NEES {nees:.2} vs 6 (factor {ratio:.2}); noise-free max position error {pos:.1e} m",
            res.episodes.len(),
            res.failed
        );
        (ratio, passed, detail)
    })
}

/// The batteries behind `check`. `full` adds the Monte-Carlo consistency run.
pub fn run_checks(level: Level, fault: Fault) -> Vec<CheckOutcome> {
    let mut out = vec![
        jacobian_battery(200, 11, fault),
        lie_battery(1000, 12),
        determinant_battery(100, 13),
        recursion_battery(100, 14),
        sdr_battery(20, 10_000, 15),
    ];
    if level == Level::Full {
        out.push(nees_battery(100, 16));
    }
    out
}
