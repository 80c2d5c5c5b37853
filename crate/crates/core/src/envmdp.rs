//! Markov decision process around the channel and mobility models:
//! observation layout, action mapping, reward and episode control.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_reports, ChannelReport, NoiseModel};
use crate::dynamics::{
    is_los_blocked, is_segment_blocked, place_blockages_count, place_blockages_mhcp, rwp_step,
    sample_stationary_position, BlockageCylinder, BlockageShape, MobilityConfig, UserState,
};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;
use crate::scene::{MirrorState, Scene};

/// Which users the reward penalizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyRule {
    /// Users below their minimum rate.
    #[default]
    Unmet,
    /// Users at or above their minimum rate (the case order printed with the
    /// penalty indicator). Only useful for fidelity experiments.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct RewardConfig<T> {
    pub penalty_weight: T,
    /// Rate normalization in bits/s; defaults to the minimum rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<T>,
    #[serde(default)]
    pub rule: PenaltyRule,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        RewardConfig {
            penalty_weight: T::one(),
            normalization: None,
            rule: PenaltyRule::Unmet,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPositions {
    #[default]
    Stationary,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct NoiseConfig<T> {
    /// Calibration target: SNR at the room center under LoS, in dB.
    /// Ignored when `total_noise_variance` is given.
    pub calibration_snr_db: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_noise_variance: Option<T>,
    #[serde(default)]
    pub residual_interference: Vec<T>,
}

impl<T: Scalar> Default for NoiseConfig<T> {
    fn default() -> Self {
        NoiseConfig {
            calibration_snr_db: T::lit(20.0),
            total_noise_variance: None,
            residual_interference: Vec::new(),
        }
    }
}

impl<T: Scalar> NoiseConfig<T> {
    pub fn build(&self, scene: &Scene<T>) -> Result<NoiseModel<T>> {
        let mut model = match self.total_noise_variance {
            Some(v) if v > T::zero() => NoiseModel::new(v),
            Some(_) => return Err(Error::config("env.noise.total_noise_variance", "must be positive")),
            None => NoiseModel::calibrated(scene, self.calibration_snr_db)?,
        };
        if self.residual_interference.iter().any(|&i| !(i >= T::zero())) {
            return Err(Error::config("env.noise.residual_interference", "must be nonnegative"));
        }
        model.residual_interference = self.residual_interference.clone();
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BlockageConfig<T> {
    /// Exact number of cylinders (conditioned hard-core process).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Parent intensity per square meter; used when `count` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<T>,
    #[serde(default)]
    pub shape: BlockageShape<T>,
    /// Fixed cylinders; overrides random placement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<BlockageCylinder<T>>>,
    /// Draw a fresh layout on every reset.
    #[serde(default = "yes")]
    pub regenerate_on_reset: bool,
}

fn yes() -> bool {
    true
}

impl<T: Scalar> Default for BlockageConfig<T> {
    fn default() -> Self {
        BlockageConfig {
            count: Some(0),
            intensity: None,
            shape: BlockageShape::default(),
            fixed: None,
            regenerate_on_reset: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct EnvConfig<T> {
    pub users: usize,
    /// Minimum rate per user, bits/s.
    pub min_rate: T,
    #[serde(default)]
    pub mobility: MobilityConfig<T>,
    /// Seconds per step.
    pub dt: T,
    pub steps_per_episode: usize,
    #[serde(default)]
    pub blockages: BlockageConfig<T>,
    /// Pinned floor positions `(x, y)`, one per user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_users: Option<Vec<[T; 2]>>,
    #[serde(default)]
    pub initial_positions: InitialPositions,
    #[serde(default)]
    pub reward: RewardConfig<T>,
    #[serde(default)]
    pub noise: NoiseConfig<T>,
    /// End the episode once every user meets its minimum rate.
    #[serde(default = "yes")]
    pub end_on_qos: bool,
    /// Also block reflected paths whose mirror-to-user segment crosses a
    /// cylinder.
    #[serde(default = "yes")]
    pub irs_path_blockage: bool,
}

impl<T: Scalar> Default for EnvConfig<T> {
    fn default() -> Self {
        EnvConfig {
            users: 5,
            min_rate: T::lit(1e6),
            mobility: MobilityConfig::default(),
            dt: T::lit(0.1),
            steps_per_episode: 200,
            blockages: BlockageConfig::default(),
            fixed_users: None,
            initial_positions: InitialPositions::Stationary,
            reward: RewardConfig::default(),
            noise: NoiseConfig::default(),
            end_on_qos: true,
            irs_path_blockage: true,
        }
    }
}

impl<T: Scalar> EnvConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::config("env.users", "at least one user is required"));
        }
        if !(self.min_rate > T::zero()) {
            return Err(Error::config("env.min_rate", "must be positive"));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::config("env.dt", "must be positive"));
        }
        if self.steps_per_episode == 0 {
            return Err(Error::config("env.steps_per_episode", "must be at least 1"));
        }
        self.mobility.validate()?;
        if let Some(fixed) = &self.fixed_users {
            if fixed.len() != self.users {
                return Err(Error::config(
                    "env.fixed_users",
                    format!("{} positions for {} users", fixed.len(), self.users),
                ));
            }
        }
        if let Some(n) = self.reward.normalization {
            if !(n > T::zero()) {
                return Err(Error::config("env.reward.normalization", "must be positive"));
            }
        }
        if !(self.reward.penalty_weight >= T::zero()) {
            return Err(Error::config("env.reward.penalty_weight", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn reward_normalization(&self) -> T {
        self.reward.normalization.unwrap_or(self.min_rate)
    }
}

/// `(sum_k R_k) / norm - weight * #penalized users`.
pub fn compute_reward<T: Scalar>(
    rates: &[T],
    min_rates: &[T],
    normalization: T,
    penalty_weight: T,
    rule: PenaltyRule,
) -> Result<T> {
    if rates.len() != min_rates.len() {
        return Err(Error::Input(format!(
            "{} rates for {} minimum rates",
            rates.len(),
            min_rates.len()
        )));
    }
    let total: T = rates.iter().copied().sum();
    let penalized = rates
        .iter()
        .zip(min_rates)
        .filter(|(&r, &m)| match rule {
            PenaltyRule::Unmet => r < m,
            PenaltyRule::Printed => r >= m,
        })
        .count();
    Ok(total / normalization - penalty_weight * T::from_usize(penalized).unwrap())
}

/// Log10 gain range mapped onto `[-1, 1]` in observations.
pub const GAIN_LOG10_RANGE: (f64, f64) = (-12.0, -3.0);

/// Positions of the observation blocks: `2K` user coordinates, `K` gains,
/// `2M` mirror angles, `K` minimum rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObservationLayout {
    pub users: usize,
    pub mirrors: usize,
}

impl ObservationLayout {
    pub fn dim(&self) -> usize {
        4 * self.users + 2 * self.mirrors
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        0..2 * self.users
    }

    pub fn gains(&self) -> std::ops::Range<usize> {
        2 * self.users..3 * self.users
    }

    pub fn angles(&self) -> std::ops::Range<usize> {
        3 * self.users..3 * self.users + 2 * self.mirrors
    }

    pub fn min_rates(&self) -> std::ops::Range<usize> {
        3 * self.users + 2 * self.mirrors..self.dim()
    }
}

pub fn normalize_coordinate<T: Scalar>(v: T, extent: T) -> T {
    T::lit(2.0) * v / extent - T::one()
}

pub fn denormalize_coordinate<T: Scalar>(n: T, extent: T) -> T {
    (n + T::one()) * extent / T::lit(2.0)
}

/// Log-scaled gain in `[-1, 1]`; zero and tiny gains saturate at -1.
pub fn normalize_gain<T: Scalar>(g: T) -> T {
    let (lo, hi) = GAIN_LOG10_RANGE;
    if g <= T::zero() {
        return -T::one();
    }
    let l = g.log10().as_f64().clamp(lo, hi);
    T::lit(2.0 * (l - lo) / (hi - lo) - 1.0)
}

pub fn denormalize_gain<T: Scalar>(n: T) -> T {
    let (lo, hi) = GAIN_LOG10_RANGE;
    let l = lo + (n.as_f64() + 1.0) * (hi - lo) / 2.0;
    T::lit(10f64.powf(l))
}

pub fn normalize_angle<T: Scalar>(a: T) -> T {
    a / T::FRAC_PI_2()
}

pub fn denormalize_angle<T: Scalar>(n: T) -> T {
    n * T::FRAC_PI_2()
}

/// Action components are clamped to `[-1, 1]` and mapped onto
/// `[-pi/2, pi/2]`, ordered `(yaw_0, roll_0, yaw_1, roll_1, ...)`.
pub fn action_to_angles<T: Scalar>(action: &[T]) -> Vec<T> {
    action
        .iter()
        .map(|&a| denormalize_angle(a.max(-T::one()).min(T::one())))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub observation: Vec<T>,
    pub reward: T,
    pub per_user_rates: Vec<T>,
    pub sum_rate: T,
    pub qos_violations: usize,
    pub done: bool,
    /// True when the episode ended because every user met its QoS target,
    /// as opposed to hitting the step limit.
    pub terminal: bool,
    pub reports: Vec<ChannelReport<T>>,
    pub positions: Vec<Vec3<T>>,
    /// Applied mirror angles in radians.
    pub angles: Vec<T>,
}

/// One environment instance: owns its RNG stream, users, blockages and
/// mirror orientations. The scene itself is never mutated.
#[derive(Clone, Debug)]
pub struct Env<T: Scalar> {
    scene: Scene<T>,
    config: EnvConfig<T>,
    noise: NoiseModel<T>,
    rng: ChaCha8Rng,
    users: Vec<UserState<T>>,
    blockages: Vec<BlockageCylinder<T>>,
    mirrors: Vec<MirrorState<T>>,
    steps: usize,
    illegal_angles: u64,
}

impl<T: Scalar> Env<T> {
    pub fn new(scene: Scene<T>, config: EnvConfig<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        let noise = config.noise.build(&scene)?;
        let mirrors = scene.initial_mirror_states();
        let mut env = Env {
            scene,
            config,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            users: Vec::new(),
            blockages: Vec::new(),
            mirrors,
            steps: 0,
            illegal_angles: 0,
        };
        env.place_blockages()?;
        env.reset(seed)?;
        Ok(env)
    }

    pub fn scene(&self) -> &Scene<T> {
        &self.scene
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.config
    }

    pub fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }

    pub fn users(&self) -> &[UserState<T>] {
        &self.users
    }

    pub fn blockages(&self) -> &[BlockageCylinder<T>] {
        &self.blockages
    }

    pub fn mirrors(&self) -> &[MirrorState<T>] {
        &self.mirrors
    }

    pub fn layout(&self) -> ObservationLayout {
        ObservationLayout {
            users: self.config.users,
            mirrors: self.scene.mirror_count(),
        }
    }

    pub fn observation_dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn action_dim(&self) -> usize {
        2 * self.scene.mirror_count()
    }

    /// Number of mirror angles that ever fell outside `[-pi/2, pi/2]`.
    pub fn illegal_angle_count(&self) -> u64 {
        self.illegal_angles
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    fn place_blockages(&mut self) -> Result<()> {
        let b = &self.config.blockages;
        self.blockages = if let Some(fixed) = &b.fixed {
            fixed.clone()
        } else if let Some(count) = b.count {
            place_blockages_count(&self.scene.room, count, &b.shape, &mut self.rng)?
        } else if let Some(intensity) = b.intensity {
            place_blockages_mhcp(&self.scene.room, intensity, &b.shape, &mut self.rng)?
        } else {
            Vec::new()
        };
        Ok(())
    }

    /// Starts a new episode from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<T>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        if self.config.blockages.regenerate_on_reset && self.config.blockages.fixed.is_none() {
            self.place_blockages()?;
        }
        let room = &self.scene.room;
        let z = room.receiver_height;
        let min_rate = self.config.min_rate;
        self.users = match &self.config.fixed_users {
            Some(fixed) => fixed
                .iter()
                .map(|&[x, y]| UserState::stationary(Vec3::new(x, y, z), min_rate))
                .collect(),
            None => (0..self.config.users)
                .map(|_| {
                    let p = match self.config.initial_positions {
                        InitialPositions::Stationary => sample_stationary_position(room, &mut self.rng),
                        InitialPositions::Uniform => {
                            let (ux, uy): (f64, f64) =
                                (rand::Rng::random(&mut self.rng), rand::Rng::random(&mut self.rng));
                            Vec3::new(room.width_x * T::lit(ux), room.depth_y * T::lit(uy), z)
                        }
                    };
                    UserState::stationary(p, min_rate)
                })
                .collect(),
        };
        self.mirrors = self.scene.initial_mirror_states();
        self.steps = 0;
        let reports = self.reports_for(&self.mirrors, &self.positions())?;
        Ok(self.observation(&reports))
    }

    pub fn positions(&self) -> Vec<Vec3<T>> {
        self.users.iter().map(|u| u.position).collect()
    }

    fn mirrors_for(&self, angles: &[T]) -> Result<Vec<MirrorState<T>>> {
        self.mirrors
            .iter()
            .enumerate()
            .map(|(m, ms)| MirrorState::with_angles(ms.center, angles[2 * m], angles[2 * m + 1]))
            .collect()
    }

    fn reports_for(&self, mirrors: &[MirrorState<T>], positions: &[Vec3<T>]) -> Result<Vec<ChannelReport<T>>> {
        let ap = self.scene.ap;
        let los: Vec<bool> = positions
            .iter()
            .map(|&p| !is_los_blocked(ap, p, &self.blockages))
            .collect();
        let check_irs = self.config.irs_path_blockage && !self.blockages.is_empty();
        channel_reports(
            &self.scene,
            mirrors,
            positions,
            &los,
            |k, m| !check_irs || !is_segment_blocked(mirrors[m].center, positions[k], &self.blockages),
            &self.noise,
        )
    }

    fn observation(&self, reports: &[ChannelReport<T>]) -> Vec<T> {
        let layout = self.layout();
        let room = &self.scene.room;
        let mut obs = Vec::with_capacity(layout.dim());
        for u in &self.users {
            obs.push(normalize_coordinate(u.position.x, room.width_x));
            obs.push(normalize_coordinate(u.position.y, room.depth_y));
        }
        for r in reports {
            obs.push(normalize_gain(r.effective_gain()));
        }
        for m in &self.mirrors {
            obs.push(normalize_angle(m.yaw()));
            obs.push(normalize_angle(m.roll()));
        }
        let bw = self.scene.receiver.bandwidth;
        for u in &self.users {
            obs.push(normalize_coordinate(u.min_rate, bw).max(-T::one()).min(T::one()));
        }
        obs
    }

    fn check_action(&self, action: &[T]) -> Result<()> {
        if action.len() != self.action_dim() {
            return Err(Error::Input(format!(
                "action has {} components, expected {}",
                action.len(),
                self.action_dim()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Input("action contains non-finite components".into()));
        }
        Ok(())
    }

    /// Sum rate the current users would see under `action`, without moving
    /// anyone. Used for frozen-scene searches.
    pub fn evaluate_action(&self, action: &[T]) -> Result<Vec<ChannelReport<T>>> {
        self.check_action(action)?;
        let mirrors = self.mirrors_for(&action_to_angles(action))?;
        self.reports_for(&mirrors, &self.positions())
    }

    pub fn frozen_sum_rate(&self, action: &[T]) -> Result<T> {
        Ok(self.evaluate_action(action)?.iter().map(|r| r.rate).sum())
    }

    pub fn step(&mut self, action: &[T]) -> Result<StepOutcome<T>> {
        self.check_action(action)?;
        let angles = action_to_angles(action);
        let lim = T::FRAC_PI_2();
        self.illegal_angles += angles.iter().filter(|&&a| !(a >= -lim && a <= lim)).count() as u64;
        self.mirrors = self.mirrors_for(&angles)?;

        let room = self.scene.room.clone();
        let mobility = self.config.mobility.clone();
        let dt = self.config.dt;
        for u in self.users.iter_mut() {
            *u = rwp_step(u, dt, &room, &mobility, &mut self.rng);
        }
        self.steps += 1;

        let positions = self.positions();
        let reports = self.reports_for(&self.mirrors, &positions)?;
        let rates: Vec<T> = reports.iter().map(|r| r.rate).collect();
        let min_rates: Vec<T> = self.users.iter().map(|u| u.min_rate).collect();
        let reward = compute_reward(
            &rates,
            &min_rates,
            self.config.reward_normalization(),
            self.config.reward.penalty_weight,
            self.config.reward.rule,
        )?;
        let qos_violations = rates.iter().zip(&min_rates).filter(|(r, m)| r < m).count();
        let terminal = self.config.end_on_qos && qos_violations == 0;
        let done = terminal || self.steps >= self.config.steps_per_episode;
        Ok(StepOutcome {
            observation: self.observation(&reports),
            reward,
            sum_rate: rates.iter().copied().sum(),
            per_user_rates: rates,
            qos_violations,
            done,
            terminal,
            reports,
            positions,
            angles,
        })
    }
}

/// One row of an episode trace CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub episode: usize,
    pub step: usize,
    pub user_id: usize,
    pub x: f64,
    pub y: f64,
    pub rate_bps: f64,
    pub qos_met: bool,
    pub reward: f64,
    pub angles: Vec<f64>,
}

pub fn trace_records<T: Scalar>(
    episode: usize,
    step: usize,
    outcome: &StepOutcome<T>,
    min_rates: &[T],
) -> Vec<TraceRecord> {
    outcome
        .positions
        .iter()
        .enumerate()
        .map(|(k, p)| TraceRecord {
            episode,
            step,
            user_id: k,
            x: p.x.as_f64(),
            y: p.y.as_f64(),
            rate_bps: outcome.per_user_rates[k].as_f64(),
            qos_met: outcome.per_user_rates[k] >= min_rates[k],
            reward: outcome.reward.as_f64(),
            angles: outcome.angles.iter().map(|a| a.as_f64()).collect(),
        })
        .collect()
}

/// Writes trace rows with columns `episode, step, user_id, x, y, rate_bps,
/// qos_met, reward, yaw_0, roll_0, ...`.
pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mirrors = records.first().map_or(0, |r| r.angles.len() / 2);
    let mut header: Vec<String> = ["episode", "step", "user_id", "x", "y", "rate_bps", "qos_met", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in 0..mirrors {
        header.push(format!("yaw_{m}"));
        header.push(format!("roll_{m}"));
    }
    let rows = records.iter().map(|r| {
        let mut row = vec![
            r.episode.to_string(),
            r.step.to_string(),
            r.user_id.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.rate_bps.to_string(),
            (r.qos_met as u8).to_string(),
            r.reward.to_string(),
        ];
        row.extend(r.angles.iter().map(|a| a.to_string()));
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    crate::harness::write_csv_atomic(path, &header, rows)
}
