//! Parallel Monte-Carlo runs with a completion-order independent reduction.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Policy, ScenarioConfig};
use super::episode::{run_episode, EpisodeTrace};
use crate::error::{Error, Result};

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(d: f64) -> f64 {
    let w = d.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// One row of the per-policy metrics table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub rmse_pos: f64,
    pub rmse_tau: f64,
    pub rmse_phi: f64,
    pub rmse_theta: f64,
    pub rmse_mu: f64,
    /// Square root of the mean bound, in the units of the matching RMSE column.
    pub cpcrb_tau: f64,
    pub cpcrb_phi: f64,
    pub cpcrb_theta: f64,
    pub cpcrb_mu: f64,
    #[serde(rename = "logdet_cpcrb_T")]
    pub logdet_cpcrb_t: f64,
    /// Episodes that had failed at or before this epoch.
    pub failures: usize,
}

#[derive(Clone, Debug)]
pub struct MonteCarloResult {
    pub policy: Policy,
    pub rows: Vec<MetricsRow>,
    /// Mean world-frame GU position error per epoch.
    pub bias: Vec<Vector3<f64>>,
    /// Mean NEES per epoch.
    pub nees: Vec<f64>,
    pub episodes: Vec<EpisodeTrace>,
    pub failed: usize,
}

impl MonteCarloResult {
    pub fn successes(&self) -> impl Iterator<Item = &EpisodeTrace> {
        self.episodes.iter().filter(|e| !e.failed())
    }

    pub fn failure_rate(&self) -> f64 {
        self.failed as f64 / self.episodes.len() as f64
    }

    /// First successful episode, used for the trajectory panel.
    pub fn representative(&self) -> Option<&EpisodeTrace> {
        self.successes().next()
    }
}

pub fn monte_carlo(cfg: &ScenarioConfig, policy: Policy) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let episodes: Vec<EpisodeTrace> = (0..cfg.run.mc_runs)
        .into_par_iter()
        .map(|run| run_episode(cfg, policy, run))
        .collect();
    aggregate(policy, cfg.run.n_epochs, episodes)
}

/// Reduces finished episodes in run order.
pub fn aggregate(
    policy: Policy,
    n_epochs: usize,
    episodes: Vec<EpisodeTrace>,
) -> Result<MonteCarloResult> {
    let ok: Vec<&EpisodeTrace> = episodes.iter().filter(|e| !e.failed()).collect();
    if ok.is_empty() {
        return Err(Error::AllEpisodesFailed);
    }
    let n = ok.len() as f64;
    let failed_at: Vec<usize> = episodes
        .iter()
        .filter_map(|e| match &e.failure {
            Some(Error::EpisodeFailed { epoch, .. }) => Some(*epoch),
            Some(_) => Some(1),
            None => None,
        })
        .collect();

    let mut rows = Vec::with_capacity(n_epochs);
    let mut bias = Vec::with_capacity(n_epochs);
    let mut nees = Vec::with_capacity(n_epochs);
    for k in 0..n_epochs {
        let mut sq = [0.0; 5];
        let mut bound = [0.0; 4];
        let mut logdet = 0.0;
        let mut b = Vector3::zeros();
        let mut ne = 0.0;
        for ep in &ok {
            let r = &ep.records[k];
            sq[0] += (r.t_hat.trans - r.t_sp.trans).norm_squared();
            let d = r.zeta_hat - r.zeta;
            sq[1] += d[0] * d[0];
            sq[2] += wrap_angle(d[1]).powi(2);
            sq[3] += wrap_angle(d[2]).powi(2);
            sq[4] += d[3] * d[3];
            for (acc, v) in bound.iter_mut().zip(r.cpcrb_zeta.iter()) {
                *acc += v;
            }
            logdet += r.logdet_cpcrb_t;
            b += r.gu_estimate - r.gu_position;
            ne += r.nees;
        }
        let rm = sq.map(|s| (s / n).sqrt());
        rows.push(MetricsRow {
            epoch: k + 1,
            rmse_pos: rm[0],
            rmse_tau: rm[1],
            rmse_phi: rm[2],
            rmse_theta: rm[3],
            rmse_mu: rm[4],
            cpcrb_tau: (bound[0] / n).sqrt(),
            cpcrb_phi: (bound[1] / n).sqrt(),
            cpcrb_theta: (bound[2] / n).sqrt(),
            cpcrb_mu: (bound[3] / n).sqrt(),
            logdet_cpcrb_t: logdet / n,
            failures: failed_at.iter().filter(|&&e| e <= k + 1).count(),
        });
        bias.push(b / n);
        nees.push(ne / n);
    }
    let failed = failed_at.len();
    Ok(MonteCarloResult {
        policy,
        rows,
        bias,
        nees,
        episodes,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_handles_the_branch_cut() {
        assert!((wrap_angle(PI - (-PI + 0.1)) - (-0.1)).abs() < 1e-12);
        assert!((wrap_angle(-PI + 0.05 - (PI - 0.05)) - 0.1).abs() < 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
    }

    #[test]
    fn all_failed_is_an_error() {
        let ep = EpisodeTrace {
            records: vec![],
            failure: Some(Error::NotPsd),
        };
        assert!(matches!(
            aggregate(Policy::Parallel, 3, vec![ep]),
            Err(Error::AllEpisodesFailed)
        ));
    }
}
