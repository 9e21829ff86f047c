//! End-to-end behaviour of the scenario layer.

use se3_isac::scenario::output::{write_manifest, write_policy_files, RunManifest};
use se3_isac::scenario::{monte_carlo, run_episode, InitMode, Policy, ScenarioConfig};
use se3_isac::Error;

fn short(epochs: usize, runs: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.run.n_epochs = epochs;
    cfg.run.mc_runs = runs;
    cfg
}

#[test]
fn noise_free_episode_is_exact() {
    let mut cfg = short(60, 1);
    cfg.noise.enabled = false;
    cfg.geometry.init = InitMode::Perfect;
    for policy in Policy::ALL {
        let ep = run_episode(&cfg, policy, 0);
        assert!(!ep.failed(), "{policy:?}: {:?}", ep.failure);
        for r in &ep.records {
            assert!((r.t_hat.trans - r.t_sp.trans).norm() < 1e-6);
        }
    }
}

#[test]
fn optimized_twists_respect_the_motion_limits() {
    let cfg = short(40, 1);
    let ep = run_episode(&cfg, Policy::Optimized, 0);
    assert!(!ep.failed());
    let l = &cfg.limits;
    let tol = 1e-9;
    let mut prev = cfg.initial_twist();
    for r in &ep.records {
        let (nu, w) = (r.twist.nu(), r.twist.omega());
        assert!(nu.z.abs() < tol && w.x.abs() < tol && w.y.abs() < tol);
        assert!(nu.norm() <= l.v_l * (1.0 + tol));
        assert!(w.z.abs() <= l.v_a * (1.0 + tol));
        assert!((nu - prev.nu()).norm() <= l.a_l * (1.0 + tol));
        assert!((w.z - prev.omega().z).abs() <= l.a_a * (1.0 + tol));
        assert!(!r.fallback);
        prev = r.twist;
    }
}

#[test]
fn bound_never_exceeds_the_prior() {
    let ep = run_episode(&short(80, 1), Policy::Diagonal, 3);
    assert!(ep.records.iter().all(|r| r.bound_gap > -1e-9));
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = ScenarioConfig::default();
    cfg.run.seed = 99;
    cfg.geometry.init = InitMode::Sampled;
    cfg.noise.sigma_z = Some(0.3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    assert_eq!(ScenarioConfig::load(&path).unwrap(), cfg);
}

#[test]
fn partial_config_keeps_defaults() {
    let cfg = ScenarioConfig::from_toml_str("[run]\nseed = 5\nn_epochs = 12\n").unwrap();
    assert_eq!(cfg.run.seed, 5);
    assert_eq!(cfg.run.n_epochs, 12);
    assert_eq!(cfg.limits, ScenarioConfig::default().limits);
}

#[test]
fn config_errors_name_the_line() {
    let err =
        ScenarioConfig::from_toml_str("[run]\nseed = 5\n\n[limits]\nv_l = \"fast\"\n").unwrap_err();
    let Error::Config(msg) = err else {
        panic!("expected a config error")
    };
    assert!(msg.contains("line 5"), "{msg}");
    let err = ScenarioConfig::from_toml_str("[run]\ndt = -1.0\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn output_files_are_complete() {
    let cfg = short(5, 2);
    let dir = tempfile::tempdir().unwrap();
    let res = monte_carlo(&cfg, Policy::Parallel).unwrap();
    let files = write_policy_files(dir.path(), &res).unwrap();
    assert_eq!(files, ["parallel_metrics.csv", "parallel_trajectory.csv"]);
    let metrics = std::fs::read_to_string(dir.path().join(&files[0])).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,rmse_pos,rmse_tau,rmse_phi,rmse_theta,rmse_mu,cpcrb_tau,cpcrb_phi,cpcrb_theta,cpcrb_mu,logdet_cpcrb_T,failures"
    );
    assert_eq!(lines.count(), 5);

    let manifest = RunManifest {
        version: se3_isac::scenario::output::version_string(),
        seed: cfg.run.seed,
        mc_runs: 2,
        n_epochs: 5,
        threads: 1,
        wall_clock_s: 0.0,
        policies: vec![],
        config: cfg.clone(),
    };
    let path = write_manifest(dir.path(), &manifest).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(json["config"]["run"]["n_epochs"], 5);
    let leftovers = std::fs::read_dir(dir.path()).unwrap().filter(|e| {
        e.as_ref()
            .unwrap()
            .path()
            .extension()
            .is_some_and(|x| x == "partial")
    });
    assert_eq!(leftovers.count(), 0);
}

#[test]
fn different_seeds_give_different_noise() {
    let mut a = short(10, 1);
    let mut b = a.clone();
    a.run.seed = 1;
    b.run.seed = 2;
    let (ea, eb) = (
        run_episode(&a, Policy::Parallel, 0),
        run_episode(&b, Policy::Parallel, 0),
    );
    assert_ne!(
        ea.records.last().unwrap().t_hat,
        eb.records.last().unwrap().t_hat
    );
}

#[test]
fn shipped_config_matches_the_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let cfg = ScenarioConfig::load(std::path::Path::new(path)).unwrap();
    let d = ScenarioConfig::default();
    assert_eq!(cfg.run, d.run);
    assert_eq!(cfg.geometry, d.geometry);
    assert_eq!(cfg.limits, d.limits);
    assert_eq!(cfg.waveform, d.waveform);
    for (a, b) in cfg.noise.xi_w.iter().zip(d.noise.xi_w.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(cfg.noise.c_w, d.noise.c_w);
    assert_eq!(cfg.noise.p0, d.noise.p0);
}
