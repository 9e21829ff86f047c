use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use se3_isac::scenario::output::{
    version_string, write_manifest, write_policy_files, PolicySummary, RunManifest,
};
use se3_isac::scenario::{monte_carlo, MonteCarloResult, Policy, ScenarioConfig};
use se3_isac::verify::{run_checks, Fault, Level};
use se3_isac::Error;

#[derive(Parser)]
#[command(
    name = "se3-isac",
    version,
    about = "UAV radar tracking on SE(3) with bound-driven control"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo runs of one or all policies; writes CSV tables and a manifest.
    Run(RunArgs),
    /// Numerical self-checks; exits non-zero if any fails.
    Check(CheckArgs),
    /// All three policies at the reference parameters, six CSV panels.
    Fig1(Common),
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; omitted sections keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    mc_runs: Option<usize>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Defaults to the policy named in the config.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimized,
    Parallel,
    Diagonal,
    All,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum LevelArg {
    #[default]
    Fast,
    Full,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t)]
    level: LevelArg,
    /// Corrupts one Jacobian column to confirm the checks can fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_FAILURES: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Command::Run(a) => {
            let policies = match a.policy {
                Some(PolicyArg::Optimized) => Some(vec![Policy::Optimized]),
                Some(PolicyArg::Parallel) => Some(vec![Policy::Parallel]),
                Some(PolicyArg::Diagonal) => Some(vec![Policy::Diagonal]),
                Some(PolicyArg::All) => Some(Policy::ALL.to_vec()),
                None => None,
            };
            experiment(&a.common, policies)
        }
        Command::Fig1(c) => experiment(&c, Some(Policy::ALL.to_vec())),
        Command::Check(a) => check(a),
    }
}

fn load_config(c: &Common) -> se3_isac::Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(n) = c.epochs {
        cfg.run.n_epochs = n;
    }
    if let Some(n) = c.mc_runs {
        cfg.run.mc_runs = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(c: &Common, policies: Option<Vec<Policy>>) -> ExitCode {
    let cfg = match load_config(c) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let policies = policies.unwrap_or_else(|| vec![cfg.run.policy]);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&c.out) {
        eprintln!("error: cannot create {}: {e}", c.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }

    let start = Instant::now();
    let mut summaries = Vec::new();
    let mut too_many_failures = false;
    for policy in policies {
        eprintln!(
            "{}: {} runs x {} epochs",
            policy.name(),
            cfg.run.mc_runs,
            cfg.run.n_epochs
        );
        let res = pool.install(|| monte_carlo(&cfg, policy));
        match report(&c.out, policy, &cfg, res) {
            Ok((summary, rate)) => {
                too_many_failures |= rate > cfg.run.max_failure_rate;
                summaries.push(summary);
            }
            Err(code) => return code,
        }
    }
    let manifest = RunManifest {
        version: version_string(),
        seed: cfg.run.seed,
        mc_runs: cfg.run.mc_runs,
        n_epochs: cfg.run.n_epochs,
        threads: pool.current_num_threads(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        policies: summaries,
        config: cfg,
    };
    if let Err(e) = write_manifest(&c.out, &manifest) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if too_many_failures {
        eprintln!("episode failure rate above max_failure_rate");
        return ExitCode::from(EXIT_FAILURES);
    }
    ExitCode::SUCCESS
}

/// Writes one policy's files; returns its summary and failure rate.
fn report(
    dir: &Path,
    policy: Policy,
    cfg: &ScenarioConfig,
    res: se3_isac::Result<MonteCarloResult>,
) -> Result<(PolicySummary, f64), ExitCode> {
    let res = match res {
        Ok(r) => r,
        Err(Error::AllEpisodesFailed) => {
            eprintln!("{}: all {} episodes failed", policy.name(), cfg.run.mc_runs);
            return Err(ExitCode::from(EXIT_FAILURES));
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Err(ExitCode::from(EXIT_CONFIG));
        }
    };
    for (run, ep) in res.episodes.iter().enumerate() {
        if let Some(f) = &ep.failure {
            eprintln!("{}: run {run}: {f}", policy.name());
        }
    }
    let files = write_policy_files(dir, &res).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    let summary = PolicySummary {
        policy: policy.name().to_string(),
        episodes: res.episodes.len(),
        failed: res.failed,
        files,
    };
    Ok((summary, res.failure_rate()))
}

fn check(a: CheckArgs) -> ExitCode {
    let level = match a.level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let fault = if a.inject_fault {
        Fault::ChannelJacobian
    } else {
        Fault::None
    };
    let outcomes = run_checks(level, fault);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    for o in &outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict}  {:<width$}  {:>6.1}s  {}",
            o.name, o.seconds, o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "{} of {} checks passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
