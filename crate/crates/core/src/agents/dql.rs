use std::io::{BufRead, Write};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ddpg::{lookup, read_header};
use super::{decay_schedule, mean, EpisodeRecord, Policy, TrainReport};
use crate::envmdp::Env;
use crate::error::{Error, Result};
use crate::neural::{soft_update, Activation, AdamState, Mlp, ReplayBuffer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqlConfig {
    /// Quantization levels per angle.
    pub levels: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_decay: Option<f64>,
}

impl Default for DqlConfig {
    fn default() -> Self {
        DqlConfig {
            levels: 5,
            hidden: vec![128, 64],
            learning_rate: 1e-3,
            gamma: 0.9,
            tau: 0.01,
            buffer_capacity: 10_000,
            batch_size: 32,
            epsilon_start: 0.995,
            epsilon_end: 1e-4,
            epsilon_decay: None,
        }
    }
}

impl DqlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::config("dql.levels", "must be at least 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config("dql.gamma", "must lie in [0, 1)"));
        }
        if !(self.tau >= 0.0 && self.tau <= 1.0) {
            return Err(Error::config("dql.tau", "must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::config(
                "dql.batch_size",
                "need 0 < batch_size <= buffer_capacity",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("dql.learning_rate", "must be positive"));
        }
        for (name, e) in [
            ("dql.epsilon_start", self.epsilon_start),
            ("dql.epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Normalized action component for quantization level `j` of `levels`.
pub fn level_value(j: usize, levels: usize) -> f64 {
    if levels <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * j as f64 / (levels - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DqlTransition {
    pub state: Vec<f64>,
    /// Chosen level per head.
    pub levels: Vec<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Q-network with one head of `levels` outputs per angle.
#[derive(Clone, Debug)]
pub struct DqlAgent {
    pub config: DqlConfig,
    pub network: Mlp<f64>,
    pub target: Mlp<f64>,
    optimizer: AdamState<f64>,
    pub buffer: ReplayBuffer<DqlTransition>,
    heads: usize,
    epsilon: f64,
}

impl DqlAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: DqlConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(action_dim * config.levels);
        let mut acts = vec![Activation::Relu; config.hidden.len()];
        acts.push(Activation::Identity);
        let network = Mlp::new(&sizes, &acts, rng)?;
        Ok(Self::from_network(config, network, action_dim))
    }

    fn from_network(config: DqlConfig, network: Mlp<f64>, heads: usize) -> Self {
        DqlAgent {
            optimizer: AdamState::new(network.param_count(), config.learning_rate),
            target: network.clone(),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            epsilon: config.epsilon_start,
            network,
            heads,
            config,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        self.epsilon = eps.clamp(0.0, 1.0);
    }

    fn argmax_levels(&self, q: &[f64]) -> Vec<usize> {
        let l = self.config.levels;
        q.chunks(l)
            .map(|head| {
                let mut best = 0;
                for (j, &v) in head.iter().enumerate() {
                    if v > head[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn greedy_levels(&self, state: &[f64]) -> Result<Vec<usize>> {
        Ok(self.argmax_levels(&self.network.forward(state)?))
    }

    /// Epsilon-greedy level choice; each head explores independently.
    pub fn select_levels<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Vec<usize>> {
        let mut levels = self.greedy_levels(state)?;
        if explore && self.epsilon > 0.0 {
            for l in levels.iter_mut() {
                if rng.random::<f64>() < self.epsilon {
                    *l = rng.random_range(0..self.config.levels);
                }
            }
        }
        Ok(levels)
    }

    pub fn levels_to_action(&self, levels: &[usize]) -> Vec<f64> {
        levels.iter().map(|&j| level_value(j, self.config.levels)).collect()
    }

    /// One Adam step on the per-head squared TD error. Returns the loss.
    pub fn update(&mut self, batch: &[&DqlTransition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::State("empty minibatch".into()));
        }
        let l = self.config.levels;
        let scale = 1.0 / (batch.len() * self.heads) as f64;
        let mut grads = vec![0.0; self.network.param_count()];
        let mut loss = 0.0;
        let mut out_grad = vec![0.0; self.heads * l];
        for tr in batch {
            let next_best: Vec<f64> = if tr.done || self.config.gamma == 0.0 {
                vec![0.0; self.heads]
            } else {
                self.target
                    .forward(&tr.next_state)?
                    .chunks(l)
                    .map(|h| h.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    .collect()
            };
            let cache = self.network.forward_cached(&tr.state)?;
            out_grad.iter_mut().for_each(|g| *g = 0.0);
            for (h, &a) in tr.levels.iter().enumerate() {
                let y = tr.reward + self.config.gamma * next_best[h];
                let diff = cache.output()[h * l + a] - y;
                loss += diff * diff * scale;
                out_grad[h * l + a] = 2.0 * diff * scale;
            }
            self.network.backward_into(&cache, &out_grad, &mut grads)?;
        }
        self.optimizer.step_network(&mut self.network, &grads)?;
        soft_update(&mut self.target, &self.network, self.config.tau)?;
        Ok(loss)
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let c = &self.config;
        writeln!(w, "dql-agent v1")?;
        writeln!(w, "levels {}", c.levels)?;
        writeln!(w, "heads {}", self.heads)?;
        writeln!(w, "gamma {:016x}", c.gamma.to_bits())?;
        writeln!(w, "tau {:016x}", c.tau.to_bits())?;
        writeln!(w, "learning_rate {:016x}", c.learning_rate.to_bits())?;
        writeln!(w, "batch_size {}", c.batch_size)?;
        writeln!(w, "buffer_capacity {}", c.buffer_capacity)?;
        self.network.write_checkpoint(w)
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let header = read_header(r, "dql-agent v1", 7)?;
        let f = |k: &str| -> Result<f64> {
            let v = lookup(&header, k)?;
            Ok(f64::from_bits(
                u64::from_str_radix(v, 16).map_err(|e| Error::Parse(e.to_string()))?,
            ))
        };
        let u = |k: &str| -> Result<usize> {
            lookup(&header, k)?
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))
        };
        let network = Mlp::read_checkpoint(r)?;
        let (levels, heads) = (u("levels")?, u("heads")?);
        if network.output_size() != levels * heads {
            return Err(Error::Parse("network output does not match heads x levels".into()));
        }
        let config = DqlConfig {
            levels,
            hidden: network.sizes()[1..network.sizes().len() - 1].to_vec(),
            learning_rate: f("learning_rate")?,
            gamma: f("gamma")?,
            tau: f("tau")?,
            buffer_capacity: u("buffer_capacity")?,
            batch_size: u("batch_size")?,
            ..DqlConfig::default()
        };
        config.validate()?;
        Ok(Self::from_network(config, network, heads))
    }
}

impl Policy for DqlAgent {
    fn name(&self) -> &str {
        "dql"
    }

    fn act(&mut self, observation: &[f64], _env: &Env<f64>) -> Result<Vec<f64>> {
        let levels = self.greedy_levels(observation)?;
        Ok(self.levels_to_action(&levels))
    }
}

pub fn dql_train<R: Rng + ?Sized>(
    agent: &mut DqlAgent,
    env: &mut Env<f64>,
    episodes: usize,
    rng: &mut R,
    timing: bool,
) -> Result<TrainReport> {
    if env.observation_dim() != agent.network.input_size() || env.action_dim() != agent.heads {
        return Err(Error::Input("agent and environment dimensions differ".into()));
    }
    let mut report = TrainReport::default();
    let start_illegal = env.illegal_angle_count();
    for episode in 0..episodes {
        let c = &agent.config;
        agent.set_epsilon(decay_schedule(
            c.epsilon_start,
            c.epsilon_end,
            c.epsilon_decay,
            episodes,
            episode,
        ));
        let mut state = env.reset(rng.next_u64())?;
        let mut rates = Vec::new();
        let mut losses = Vec::new();
        let mut latencies = Vec::new();
        let mut reward = 0.0;
        let mut violations = 0;
        loop {
            let clock = timing.then(Instant::now);
            let levels = agent.select_levels(&state, true, rng)?;
            if let Some(t) = clock {
                latencies.push(t.elapsed().as_secs_f64());
            }
            let out = env.step(&agent.levels_to_action(&levels))?;
            agent.buffer.push(DqlTransition {
                state: std::mem::take(&mut state),
                levels,
                reward: out.reward,
                next_state: out.observation.clone(),
                done: out.terminal,
            });
            if agent.buffer.len() >= agent.config.batch_size {
                let batch: Vec<DqlTransition> = agent
                    .buffer
                    .sample(agent.config.batch_size, rng)?
                    .into_iter()
                    .cloned()
                    .collect();
                let refs: Vec<&DqlTransition> = batch.iter().collect();
                losses.push(agent.update(&refs)?);
            }
            rates.push(out.sum_rate);
            reward += out.reward;
            violations += out.qos_violations;
            state = out.observation;
            if out.done {
                break;
            }
        }
        report.episodes.push(EpisodeRecord {
            episode,
            sum_rate_bps: mean(&rates).unwrap_or(0.0),
            reward,
            critic_loss: mean(&losses),
            qos_violations: violations,
            decision_latency_s: mean(&latencies),
            steps: rates.len(),
        });
    }
    report.illegal_angles = env.illegal_angle_count() - start_illegal;
    Ok(report)
}
