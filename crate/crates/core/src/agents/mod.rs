//! Mirror-orientation controllers: the actor-critic agent, a quantized
//! deep Q-learning baseline, random orientation and exhaustive search.

mod baselines;
mod ddpg;
mod dql;

use std::path::Path;

pub use baselines::{exhaustive_search, grid_value, random_orientation_policy, RandomOrientation};
pub use ddpg::{ddpg_train, DdpgAgent, DdpgConfig};
pub use dql::{dql_train, level_value, DqlAgent, DqlConfig, DqlTransition};

use crate::envmdp::Env;
use crate::error::Result;

/// Per-episode training statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Mean over the episode's steps of the instantaneous sum rate.
    pub sum_rate_bps: f64,
    /// Total reward collected.
    pub reward: f64,
    /// Mean loss over the episode's updates; `None` before the buffer fills.
    pub critic_loss: Option<f64>,
    pub qos_violations: usize,
    /// Mean wall-clock seconds per action selection, when timing is enabled.
    pub decision_latency_s: Option<f64>,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeRecord>,
    /// Mirror angles observed outside `[-pi/2, pi/2]` during training.
    pub illegal_angles: u64,
}

impl TrainReport {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn sum_rates(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.sum_rate_bps).collect()
    }

    /// CSV with columns `episode, sum_rate_bps, reward, critic_loss,
    /// qos_violations, decision_latency_s`. Missing values are empty fields.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = [
            "episode",
            "sum_rate_bps",
            "reward",
            "critic_loss",
            "qos_violations",
            "decision_latency_s",
        ];
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let rows = self.episodes.iter().map(|e| {
            vec![
                e.episode.to_string(),
                e.sum_rate_bps.to_string(),
                e.reward.to_string(),
                opt(e.critic_loss),
                e.qos_violations.to_string(),
                opt(e.decision_latency_s),
            ]
        });
        crate::harness::write_csv_atomic(path, &header, rows)
    }
}

/// Anything that maps observations to actions in `[-1, 1]^{2M}`.
pub trait Policy {
    fn name(&self) -> &str;

    /// Called after every environment reset.
    fn begin_episode(&mut self, _env: &Env<f64>, _seed: u64) {}

    fn act(&mut self, observation: &[f64], env: &Env<f64>) -> Result<Vec<f64>>;
}

/// Mean of a slice, `None` when empty.
pub(crate) fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Exploration scale for `episode` of a geometric decay from `start` to
/// `end`. With no explicit factor the decay reaches `end` on the last episode.
pub fn decay_schedule(start: f64, end: f64, factor: Option<f64>, episodes: usize, episode: usize) -> f64 {
    let factor = factor.unwrap_or_else(|| {
        if episodes <= 1 || start <= 0.0 || end <= 0.0 {
            1.0
        } else {
            (end / start).powf(1.0 / (episodes - 1) as f64)
        }
    });
    (start * factor.powi(episode as i32)).max(end.min(start))
}
