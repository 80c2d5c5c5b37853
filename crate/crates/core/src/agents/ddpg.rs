use std::io::{BufRead, Write};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{decay_schedule, mean, EpisodeRecord, Policy, TrainReport};
use crate::envmdp::Env;
use crate::error::{Error, Result};
use crate::neural::{soft_update, Activation, AdamState, Mlp, ReplayBuffer, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Gaussian action-noise standard deviation at the first episode.
    pub noise_start: f64,
    pub noise_end: f64,
    /// Per-episode multiplicative decay; by default chosen so the noise
    /// reaches `noise_end` on the final training episode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_decay: Option<f64>,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            actor_hidden: vec![128, 64],
            critic_hidden: vec![256, 128],
            actor_lr: 1e-3,
            critic_lr: 1e-2,
            gamma: 0.9,
            tau: 0.01,
            buffer_capacity: 10_000,
            batch_size: 32,
            noise_start: 0.995,
            noise_end: 1e-4,
            noise_decay: None,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config("ddpg.gamma", "must lie in [0, 1)"));
        }
        if !(self.tau >= 0.0 && self.tau <= 1.0) {
            return Err(Error::config("ddpg.tau", "must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::config(
                "ddpg.batch_size",
                "need 0 < batch_size <= buffer_capacity",
            ));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::config("ddpg.actor_lr", "learning rates must be positive"));
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return Err(Error::config("ddpg.noise_start", "noise scales must be nonnegative"));
        }
        Ok(())
    }
}

/// Deterministic-policy actor-critic agent with target networks.
#[derive(Clone, Debug)]
pub struct DdpgAgent {
    pub config: DdpgConfig,
    pub actor: Mlp<f64>,
    pub critic: Mlp<f64>,
    pub actor_target: Mlp<f64>,
    pub critic_target: Mlp<f64>,
    actor_opt: AdamState<f64>,
    critic_opt: AdamState<f64>,
    pub buffer: ReplayBuffer<Transition<f64>>,
    noise_scale: f64,
}

fn hidden_stack(input: usize, hidden: &[usize], output: usize, head: Activation) -> (Vec<usize>, Vec<Activation>) {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(head);
    (sizes, acts)
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: DdpgConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (a_sizes, a_acts) = hidden_stack(obs_dim, &config.actor_hidden, action_dim, Activation::Tanh);
        let (c_sizes, c_acts) = hidden_stack(obs_dim + action_dim, &config.critic_hidden, 1, Activation::Identity);
        let actor = Mlp::new(&a_sizes, &a_acts, rng)?;
        let critic = Mlp::new(&c_sizes, &c_acts, rng)?;
        Ok(Self::from_networks(config, actor, critic))
    }

    fn from_networks(config: DdpgConfig, actor: Mlp<f64>, critic: Mlp<f64>) -> Self {
        DdpgAgent {
            actor_opt: AdamState::new(actor.param_count(), config.actor_lr),
            critic_opt: AdamState::new(critic.param_count(), config.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            noise_scale: config.noise_start,
            actor,
            critic,
            config,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_size()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_size()
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn set_noise_scale(&mut self, sigma: f64) {
        self.noise_scale = sigma.max(0.0);
    }

    pub fn select_action<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.actor.forward(state)?;
        if explore && self.noise_scale > 0.0 {
            let normal = Normal::new(0.0, self.noise_scale).map_err(|e| Error::Input(e.to_string()))?;
            for x in a.iter_mut() {
                *x = (*x + normal.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    pub fn critic_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&concat(state, action))?[0])
    }

    /// One critic step on the mean-squared Bellman error. Returns the loss
    /// before the step.
    pub fn critic_step(&mut self, batch: &[&Transition<f64>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::State("empty minibatch".into()));
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.critic.param_count()];
        let mut loss = 0.0;
        for tr in batch {
            let y = if tr.done || self.config.gamma == 0.0 {
                tr.reward
            } else {
                let next_a = self.actor_target.forward(&tr.next_state)?;
                let next_q = self.critic_target.forward(&concat(&tr.next_state, &next_a))?[0];
                tr.reward + self.config.gamma * next_q
            };
            let cache = self.critic.forward_cached(&concat(&tr.state, &tr.action))?;
            let diff = cache.output()[0] - y;
            loss += diff * diff / n;
            self.critic.backward_into(&cache, &[2.0 * diff / n], &mut grads)?;
        }
        self.critic_opt.step_network(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// Gradient of `-mean Q(s, mu(s))` with respect to the actor parameters,
    /// and the mean critic value.
    pub fn actor_gradient(&self, states: &[&[f64]]) -> Result<(Vec<f64>, f64)> {
        let n = states.len() as f64;
        let obs = self.obs_dim();
        let mut grads = vec![0.0; self.actor.param_count()];
        let mut objective = 0.0;
        for s in states {
            let a_cache = self.actor.forward_cached(s)?;
            let c_cache = self.critic.forward_cached(&concat(s, a_cache.output()))?;
            objective += c_cache.output()[0] / n;
            let dx = self.critic.input_gradient(&c_cache, &[-1.0 / n])?;
            self.actor.backward_into(&a_cache, &dx[obs..], &mut grads)?;
        }
        Ok((grads, objective))
    }

    /// Critic step, actor step along the deterministic policy gradient,
    /// then soft target updates. Returns `(critic_loss, actor_objective)`.
    pub fn update(&mut self, batch: &[&Transition<f64>]) -> Result<(f64, f64)> {
        let loss = self.critic_step(batch)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let (grads, objective) = self.actor_gradient(&states)?;
        self.actor_opt.step_network(&mut self.actor, &grads)?;
        soft_update(&mut self.critic_target, &self.critic, self.config.tau)?;
        soft_update(&mut self.actor_target, &self.actor, self.config.tau)?;
        Ok((loss, objective))
    }

    /// Samples a minibatch from the replay buffer and updates.
    pub fn update_from_buffer<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(f64, f64)> {
        let batch: Vec<Transition<f64>> = self
            .buffer
            .sample(self.config.batch_size, rng)?
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition<f64>> = batch.iter().collect();
        self.update(&refs)
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let c = &self.config;
        writeln!(w, "ddpg-agent v1")?;
        writeln!(w, "gamma {:016x}", c.gamma.to_bits())?;
        writeln!(w, "tau {:016x}", c.tau.to_bits())?;
        writeln!(w, "actor_lr {:016x}", c.actor_lr.to_bits())?;
        writeln!(w, "critic_lr {:016x}", c.critic_lr.to_bits())?;
        writeln!(w, "batch_size {}", c.batch_size)?;
        writeln!(w, "buffer_capacity {}", c.buffer_capacity)?;
        self.actor.write_checkpoint(w)?;
        self.critic.write_checkpoint(w)
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let header = read_header(r, "ddpg-agent v1", 6)?;
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
        let actor = Mlp::read_checkpoint(r)?;
        let critic = Mlp::read_checkpoint(r)?;
        let config = DdpgConfig {
            actor_hidden: actor.sizes()[1..actor.sizes().len() - 1].to_vec(),
            critic_hidden: critic.sizes()[1..critic.sizes().len() - 1].to_vec(),
            actor_lr: f("actor_lr")?,
            critic_lr: f("critic_lr")?,
            gamma: f("gamma")?,
            tau: f("tau")?,
            buffer_capacity: u("buffer_capacity")?,
            batch_size: u("batch_size")?,
            ..DdpgConfig::default()
        };
        if critic.input_size() != actor.input_size() + actor.output_size() {
            return Err(Error::Parse("critic input does not match actor dimensions".into()));
        }
        Ok(Self::from_networks(config, actor, critic))
    }
}

pub(crate) fn read_header<R: BufRead>(r: &mut R, magic: &str, lines: usize) -> Result<Vec<(String, String)>> {
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::Parse(e.to_string()))?;
    if line.trim_end() != magic {
        return Err(Error::Parse(format!("expected `{magic}` checkpoint")));
    }
    let mut out = Vec::with_capacity(lines);
    for _ in 0..lines {
        line.clear();
        r.read_line(&mut line).map_err(|e| Error::Parse(e.to_string()))?;
        let (k, v) = line
            .trim_end()
            .split_once(' ')
            .ok_or_else(|| Error::Parse(format!("malformed header line `{}`", line.trim_end())))?;
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub(crate) fn lookup<'a>(header: &'a [(String, String)], key: &str) -> Result<&'a str> {
    header
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Parse(format!("missing header `{key}`")))
}

pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

impl Policy for DdpgAgent {
    fn name(&self) -> &str {
        "ddpg"
    }

    fn act(&mut self, observation: &[f64], _env: &Env<f64>) -> Result<Vec<f64>> {
        self.actor.forward(observation)
    }
}

/// Runs the actor-critic training loop for `episodes` episodes.
pub fn ddpg_train<R: Rng + ?Sized>(
    agent: &mut DdpgAgent,
    env: &mut Env<f64>,
    episodes: usize,
    rng: &mut R,
    timing: bool,
) -> Result<TrainReport> {
    if env.observation_dim() != agent.obs_dim() || env.action_dim() != agent.action_dim() {
        return Err(Error::Input(format!(
            "agent is {}->{}, environment is {}->{}",
            agent.obs_dim(),
            agent.action_dim(),
            env.observation_dim(),
            env.action_dim()
        )));
    }
    let mut report = TrainReport::default();
    let start_illegal = env.illegal_angle_count();
    for episode in 0..episodes {
        let c = &agent.config;
        agent.set_noise_scale(decay_schedule(
            c.noise_start,
            c.noise_end,
            c.noise_decay,
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
            let action = agent.select_action(&state, true, rng)?;
            if let Some(t) = clock {
                latencies.push(t.elapsed().as_secs_f64());
            }
            let out = env.step(&action)?;
            agent.buffer.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: out.reward,
                next_state: out.observation.clone(),
                done: out.terminal,
            });
            if agent.buffer.len() >= agent.config.batch_size {
                let (loss, _) = agent.update_from_buffer(rng)?;
                losses.push(loss);
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
