//! Experiment runner: configuration, sweeps, evaluation and CSV output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    ddpg_train, dql_train, DdpgAgent, DdpgConfig, DqlAgent, DqlConfig, EpisodeRecord, Policy, RandomOrientation,
    TrainReport,
};
use crate::channel::{ber_ook, NoiseModel};
use crate::dynamics::MobilityConfig;
use crate::envmdp::{Env, EnvConfig};
use crate::error::{Error, Result};
use crate::scene::{build_scene, SceneConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Ddpg,
    Dql,
    Random,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ddpg => "ddpg",
            PolicyKind::Dql => "dql",
            PolicyKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(PolicyKind::Ddpg),
            "dql" => Ok(PolicyKind::Dql),
            "random" => Ok(PolicyKind::Random),
            _ => Err(Error::Input(format!("unknown policy `{s}`"))),
        }
    }
}

/// Sweep axes. An absent axis uses the base configuration's value; a present
/// axis must be nonempty. IRS size and blockage count are training axes;
/// power, SNR and velocity are evaluation axes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    /// Transmit power, watts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blockages: Option<Vec<usize>>,
    /// `[rows, cols]` per IRS size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irs_sizes: Option<Vec<[usize; 2]>>,
    /// User speed, m/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<f64>>,
    /// Room-center LoS SNR used to calibrate the noise, dB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
    /// Measure per-decision wall-clock latency. Off by default because the
    /// measurements make output files differ between runs.
    #[serde(default)]
    pub timing: bool,
    pub train_episodes: usize,
    #[serde(default = "default_horizon")]
    pub eval_horizon: usize,
    #[serde(default = "all_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub scene: SceneConfig<f64>,
    #[serde(default)]
    pub env: EnvConfig<f64>,
    #[serde(default)]
    pub ddpg: DdpgConfig,
    #[serde(default)]
    pub dql: DqlConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

fn default_horizon() -> usize {
    500
}

fn all_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::Ddpg, PolicyKind::Dql, PolicyKind::Random]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: default_name(),
            seeds: vec![0],
            output_dir: PathBuf::from("results"),
            workers: 1,
            timing: false,
            train_episodes: 1000,
            eval_horizon: default_horizon(),
            policies: all_policies(),
            scene: SceneConfig::default(),
            env: EnvConfig::default(),
            ddpg: DdpgConfig::default(),
            dql: DqlConfig::default(),
            sweep: SweepAxes::default(),
        }
    }
}

fn check_axis<V>(axis: &Option<Vec<V>>, field: &str) -> Result<()> {
    match axis {
        Some(v) if v.is_empty() => Err(Error::config(field, "sweep axis must not be empty")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.eval_horizon == 0 {
            return Err(Error::config("eval_horizon", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "at least one policy is required"));
        }
        check_axis(&self.sweep.powers, "sweep.powers")?;
        check_axis(&self.sweep.blockages, "sweep.blockages")?;
        check_axis(&self.sweep.irs_sizes, "sweep.irs_sizes")?;
        check_axis(&self.sweep.velocities, "sweep.velocities")?;
        check_axis(&self.sweep.snr_db, "sweep.snr_db")?;
        if let Some(p) = &self.sweep.powers {
            if p.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(Error::config("sweep.powers", "powers must be positive"));
            }
        }
        if let Some(v) = &self.sweep.velocities {
            if v.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
                return Err(Error::config("sweep.velocities", "speeds must be nonnegative"));
            }
        }
        self.scene.validate()?;
        self.env.validate()?;
        self.ddpg.validate()?;
        self.dql.validate()?;
        for p in self.training_points() {
            let mut scene = self.scene.clone();
            scene.mirrors.rows = p.irs[0];
            scene.mirrors.cols = p.irs[1];
            scene.validate()?;
        }
        Ok(())
    }

    fn training_points(&self) -> Vec<TrainingPoint> {
        let irs = self
            .sweep
            .irs_sizes
            .clone()
            .unwrap_or_else(|| vec![[self.scene.mirrors.rows, self.scene.mirrors.cols]]);
        let blockages = self
            .sweep
            .blockages
            .clone()
            .unwrap_or_else(|| vec![self.env.blockages.count.unwrap_or(0)]);
        let mut out = Vec::new();
        for &irs in &irs {
            for &b in &blockages {
                out.push(TrainingPoint { irs, blockages: b });
            }
        }
        out
    }

    fn eval_points(&self) -> Vec<EvalPoint> {
        let powers = self
            .sweep
            .powers
            .clone()
            .unwrap_or_else(|| vec![self.scene.led.transmit_power]);
        let snrs = self
            .sweep
            .snr_db
            .clone()
            .unwrap_or_else(|| vec![self.env.noise.calibration_snr_db]);
        let velocities: Vec<Option<f64>> = match &self.sweep.velocities {
            Some(v) => v.iter().map(|&s| Some(s)).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &power in &powers {
            for &snr in &snrs {
                for &velocity in &velocities {
                    out.push(EvalPoint {
                        power,
                        snr_db: snr,
                        velocity,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct TrainingPoint {
    irs: [usize; 2],
    blockages: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct EvalPoint {
    power: f64,
    snr_db: f64,
    /// `None` keeps the base mobility model.
    velocity: Option<f64>,
}

/// One metric value for one scenario, either per seed or aggregated.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub policy: String,
    pub irs_rows: usize,
    pub irs_cols: usize,
    pub blockages: usize,
    /// Empty when the base mobility model was used.
    pub velocity_mps: Option<f64>,
    pub power_w: f64,
    pub snr_db: f64,
    /// `None` on aggregated rows.
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    /// `none` for per-seed rows, `mean` or `std` across seeds otherwise.
    pub aggregation: String,
}

pub const RESULT_HEADER: [&str; 11] = [
    "policy",
    "irs_rows",
    "irs_cols",
    "blockages",
    "velocity_mps",
    "power_w",
    "snr_db",
    "seed",
    "metric",
    "value",
    "aggregation",
];

impl ResultRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.policy.clone(),
            self.irs_rows.to_string(),
            self.irs_cols.to_string(),
            self.blockages.to_string(),
            self.velocity_mps.map(|v| v.to_string()).unwrap_or_default(),
            self.power_w.to_string(),
            self.snr_db.to_string(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.metric.clone(),
            self.value.to_string(),
            self.aggregation.clone(),
        ]
    }
}

/// Writes `header` and `rows` to a sibling temporary file, then renames it
/// over `path`. Floats should be formatted with `to_string`, which is
/// locale-independent and round-trips exactly.
pub fn write_csv_atomic<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    let write = || -> std::result::Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&tmp)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, std::io::Error::other(e.to_string())));
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes result rows with [`RESULT_HEADER`]. Refuses an empty row set.
pub fn emit_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Input("no result rows to write".into()));
    }
    write_csv_atomic(path, &RESULT_HEADER, rows.iter().map(ResultRow::fields))
}

/// Parses a file written by [`emit_csv`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let parse_err = |e: String| Error::Parse(format!("{}: {e}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.len() != RESULT_HEADER.len() {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                RESULT_HEADER.len(),
                rec.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))
        };
        let u = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))
        };
        out.push(ResultRow {
            policy: rec[0].to_string(),
            irs_rows: u(1)?,
            irs_cols: u(2)?,
            blockages: u(3)?,
            velocity_mps: if rec[4].is_empty() { None } else { Some(f(4)?) },
            power_w: f(5)?,
            snr_db: f(6)?,
            seed: if rec[7].is_empty() {
                None
            } else {
                Some(
                    rec[7]
                        .parse()
                        .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
                )
            },
            metric: rec[8].to_string(),
            value: f(9)?,
            aggregation: rec[10].to_string(),
        });
    }
    Ok(out)
}

/// Metrics of one evaluation episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub sum_rate_bps: f64,
    /// Mean over users and steps of the OOK bit-error rate.
    pub ber: f64,
    pub reward: f64,
    /// Fraction of user-steps below the minimum rate.
    pub qos_violation_fraction: f64,
    pub latency_s: Option<f64>,
    pub illegal_angles: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeMetrics>,
}

impl EvalSummary {
    fn column(&self, f: impl Fn(&EpisodeMetrics) -> Option<f64>) -> Vec<f64> {
        self.episodes.iter().filter_map(f).collect()
    }

    pub fn sum_rate(&self) -> (f64, f64) {
        mean_std(&self.column(|e| Some(e.sum_rate_bps)))
    }

    pub fn ber(&self) -> (f64, f64) {
        mean_std(&self.column(|e| Some(e.ber)))
    }

    pub fn reward(&self) -> (f64, f64) {
        mean_std(&self.column(|e| Some(e.reward)))
    }

    pub fn qos_violation_fraction(&self) -> (f64, f64) {
        mean_std(&self.column(|e| Some(e.qos_violation_fraction)))
    }

    pub fn latency(&self) -> Option<(f64, f64)> {
        let l = self.column(|e| e.latency_s);
        (!l.is_empty()).then(|| mean_std(&l))
    }

    pub fn illegal_angles(&self) -> u64 {
        self.episodes.iter().map(|e| e.illegal_angles).sum()
    }
}

/// Mean and sample standard deviation; the sum is taken over sorted values
/// so the result does not depend on input order.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// Runs `policy` for `horizon` steps from each seed with exploration off.
/// The environment runs the full horizon regardless of QoS termination.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &mut P,
    env: &mut Env<f64>,
    horizon: usize,
    seeds: &[u64],
    timing: bool,
) -> Result<EvalSummary> {
    let mut episodes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let start_illegal = env.illegal_angle_count();
        let mut obs = env.reset(seed)?;
        policy.begin_episode(env, seed);
        let (mut rate, mut ber, mut reward, mut unmet, mut lat) = (0.0, 0.0, 0.0, 0usize, Vec::new());
        let users = env.config().users;
        for _ in 0..horizon {
            let clock = timing.then(Instant::now);
            let action = policy.act(&obs, env)?;
            if let Some(t) = clock {
                lat.push(t.elapsed().as_secs_f64());
            }
            let out = env.step(&action)?;
            rate += out.sum_rate;
            reward += out.reward;
            unmet += out.qos_violations;
            ber += out.reports.iter().map(|r| ber_ook(r.sinr)).sum::<f64>() / users as f64;
            obs = out.observation;
        }
        let h = horizon as f64;
        episodes.push(EpisodeMetrics {
            seed,
            sum_rate_bps: rate / h,
            ber: ber / h,
            reward: reward / h,
            qos_violation_fraction: unmet as f64 / (h * users as f64),
            latency_s: crate::agents::mean(&lat),
            illegal_angles: env.illegal_angle_count() - start_illegal,
        });
    }
    Ok(EvalSummary { episodes })
}

/// Per-episode curve for a random orientation redrawn every episode,
/// comparable with a training report.
pub fn random_curve(env: &mut Env<f64>, episodes: usize, rng: &mut ChaCha8Rng) -> Result<TrainReport> {
    let mut policy = RandomOrientation::new();
    let mut report = TrainReport::default();
    let start_illegal = env.illegal_angle_count();
    for episode in 0..episodes {
        let seed = rng.next_u64();
        let mut obs = env.reset(seed)?;
        policy.begin_episode(env, seed);
        let (mut rates, mut reward, mut violations) = (Vec::new(), 0.0, 0);
        loop {
            let out = env.step(&policy.act(&obs, env)?)?;
            rates.push(out.sum_rate);
            reward += out.reward;
            violations += out.qos_violations;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        report.episodes.push(EpisodeRecord {
            episode,
            sum_rate_bps: rates.iter().sum::<f64>() / rates.len() as f64,
            reward,
            critic_loss: None,
            qos_violations: violations,
            decision_latency_s: None,
            steps: rates.len(),
        });
    }
    report.illegal_angles = env.illegal_angle_count() - start_illegal;
    Ok(report)
}

/// Seed for evaluation episodes, kept apart from the training stream.
pub fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xE7A1_0000_0000_0001
}

/// A trained (or fixed) policy ready for evaluation.
pub enum TrainedPolicy {
    Ddpg(Box<DdpgAgent>),
    Dql(Box<DqlAgent>),
    Random(RandomOrientation),
}

impl TrainedPolicy {
    pub fn as_policy(&mut self) -> &mut dyn Policy {
        match self {
            TrainedPolicy::Ddpg(a) => a.as_mut(),
            TrainedPolicy::Dql(a) => a.as_mut(),
            TrainedPolicy::Random(r) => r,
        }
    }
}

/// Base scene and env configuration for one training point.
fn point_configs(cfg: &ExperimentConfig, p: TrainingPoint) -> (SceneConfig<f64>, EnvConfig<f64>) {
    let mut scene = cfg.scene.clone();
    scene.mirrors.rows = p.irs[0];
    scene.mirrors.cols = p.irs[1];
    let mut env = cfg.env.clone();
    if env.blockages.fixed.is_none() {
        env.blockages.count = Some(p.blockages);
    }
    (scene, env)
}

/// Trains `kind` on `env` with `seed`. Random orientation produces its
/// per-episode curve without learning.
pub fn train_policy(
    kind: PolicyKind,
    env: &mut Env<f64>,
    ddpg: &DdpgConfig,
    dql: &DqlConfig,
    episodes: usize,
    seed: u64,
    timing: bool,
) -> Result<(TrainedPolicy, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (obs, act) = (env.observation_dim(), env.action_dim());
    Ok(match kind {
        PolicyKind::Ddpg => {
            let mut agent = DdpgAgent::new(obs, act, ddpg.clone(), &mut rng)?;
            let report = ddpg_train(&mut agent, env, episodes, &mut rng, timing)?;
            (TrainedPolicy::Ddpg(Box::new(agent)), report)
        }
        PolicyKind::Dql => {
            let mut agent = DqlAgent::new(obs, act, dql.clone(), &mut rng)?;
            let report = dql_train(&mut agent, env, episodes, &mut rng, timing)?;
            (TrainedPolicy::Dql(Box::new(agent)), report)
        }
        PolicyKind::Random => {
            let report = random_curve(env, episodes, &mut rng)?;
            (TrainedPolicy::Random(RandomOrientation::new()), report)
        }
    })
}

/// Evaluation environment: the training scene at `power`, noise calibrated
/// at `snr_db` for the base power (so power changes move the SNR), the
/// requested speed, and a fixed horizon without early termination.
pub fn eval_env(
    scene_cfg: &SceneConfig<f64>,
    env_cfg: &EnvConfig<f64>,
    power: f64,
    snr_db: f64,
    velocity: Option<f64>,
    horizon: usize,
    seed: u64,
) -> Result<Env<f64>> {
    let base = build_scene(scene_cfg)?;
    let mut env_cfg = env_cfg.clone();
    if env_cfg.noise.total_noise_variance.is_none() || snr_db != env_cfg.noise.calibration_snr_db {
        env_cfg.noise.total_noise_variance = Some(NoiseModel::calibrated(&base, snr_db)?.total_noise_variance);
    }
    env_cfg.noise.calibration_snr_db = snr_db;
    if let Some(v) = velocity {
        env_cfg.mobility = MobilityConfig::fixed_speed(v);
    }
    env_cfg.steps_per_episode = horizon;
    env_cfg.end_on_qos = false;
    Env::new(base.with_power(power)?, env_cfg, seed)
}

/// Evaluates `policy` at every evaluation point of `cfg` for the scenario
/// `(irs, blockages)`, one episode per seed. Returns per-seed rows and the
/// number of illegal angles seen.
pub fn evaluate_rows(
    cfg: &ExperimentConfig,
    irs: [usize; 2],
    blockages: usize,
    label: &str,
    policy: &mut dyn Policy,
    seeds: &[u64],
) -> Result<(Vec<ResultRow>, u64)> {
    let (scene_cfg, env_cfg) = point_configs(cfg, TrainingPoint { irs, blockages });
    let mut results = Vec::new();
    let mut illegal = 0;
    for ep in cfg.eval_points() {
        for &seed in seeds {
            let es = eval_seed(seed);
            let mut env = eval_env(
                &scene_cfg,
                &env_cfg,
                ep.power,
                ep.snr_db,
                ep.velocity,
                cfg.eval_horizon,
                es,
            )?;
            let summary = evaluate_policy(policy, &mut env, cfg.eval_horizon, &[es], cfg.timing)?;
            illegal += summary.illegal_angles();
            let m = &summary.episodes[0];
            let mut metrics = vec![
                ("sum_rate_bps", m.sum_rate_bps),
                ("ber", m.ber),
                ("reward", m.reward),
                ("qos_violation_fraction", m.qos_violation_fraction),
            ];
            if let Some(l) = m.latency_s {
                metrics.push(("latency_s", l));
            }
            for (metric, value) in metrics {
                results.push(ResultRow {
                    policy: label.into(),
                    irs_rows: irs[0],
                    irs_cols: irs[1],
                    blockages,
                    velocity_mps: ep.velocity,
                    power_w: ep.power,
                    snr_db: ep.snr_db,
                    seed: Some(seed),
                    metric: metric.into(),
                    value,
                    aggregation: "none".into(),
                });
            }
        }
    }
    Ok((results, illegal))
}

/// The first training point's IRS size and blockage count.
pub fn base_point(cfg: &ExperimentConfig) -> ([usize; 2], usize) {
    let p = cfg.training_points()[0];
    (p.irs, p.blockages)
}

/// Builds the training environment for `(irs, blockages)`.
pub fn training_env(cfg: &ExperimentConfig, irs: [usize; 2], blockages: usize, seed: u64) -> Result<Env<f64>> {
    let (scene_cfg, env_cfg) = point_configs(cfg, TrainingPoint { irs, blockages });
    Env::new(build_scene(&scene_cfg)?, env_cfg, seed)
}

struct JobOutput {
    training: Vec<Vec<String>>,
    results: Vec<ResultRow>,
    illegal_angles: u64,
}

/// Summary of a completed run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub training_csv: PathBuf,
    pub results_csv: PathBuf,
    pub rows: Vec<ResultRow>,
    pub illegal_angles: u64,
}

pub const TRAINING_HEADER: [&str; 11] = [
    "policy",
    "irs_rows",
    "irs_cols",
    "blockages",
    "seed",
    "episode",
    "sum_rate_bps",
    "reward",
    "critic_loss",
    "qos_violations",
    "decision_latency_s",
];

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

fn run_job(cfg: &ExperimentConfig, point: TrainingPoint, kind: PolicyKind, seed: u64) -> Result<JobOutput> {
    let mut env = training_env(cfg, point.irs, point.blockages, seed)?;
    let (mut policy, report) = train_policy(
        kind,
        &mut env,
        &cfg.ddpg,
        &cfg.dql,
        cfg.train_episodes,
        seed,
        cfg.timing,
    )?;
    let mut illegal = report.illegal_angles;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let training = report
        .episodes
        .iter()
        .map(|e| {
            vec![
                kind.name().to_string(),
                point.irs[0].to_string(),
                point.irs[1].to_string(),
                point.blockages.to_string(),
                seed.to_string(),
                e.episode.to_string(),
                e.sum_rate_bps.to_string(),
                e.reward.to_string(),
                opt(e.critic_loss),
                e.qos_violations.to_string(),
                opt(e.decision_latency_s),
            ]
        })
        .collect();
    let (results, eval_illegal) = evaluate_rows(
        cfg,
        point.irs,
        point.blockages,
        kind.name(),
        policy.as_policy(),
        &[seed],
    )?;
    illegal += eval_illegal;
    Ok(JobOutput {
        training,
        results,
        illegal_angles: illegal,
    })
}

/// Mean and std rows over seeds for every scenario/metric in `rows`.
pub fn aggregate(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut out: Vec<ResultRow> = Vec::new();
    let same = |a: &ResultRow, b: &ResultRow| {
        a.policy == b.policy
            && a.irs_rows == b.irs_rows
            && a.irs_cols == b.irs_cols
            && a.blockages == b.blockages
            && a.velocity_mps == b.velocity_mps
            && a.power_w == b.power_w
            && a.snr_db == b.snr_db
            && a.metric == b.metric
    };
    let mut seen: Vec<&ResultRow> = Vec::new();
    for r in rows.iter().filter(|r| r.seed.is_some()) {
        if seen.iter().any(|s| same(s, r)) {
            continue;
        }
        seen.push(r);
        let values: Vec<f64> = rows
            .iter()
            .filter(|o| o.seed.is_some() && same(o, r))
            .map(|o| o.value)
            .collect();
        let (mean, std) = mean_std(&values);
        for (agg, value) in [("mean", mean), ("std", std)] {
            out.push(ResultRow {
                seed: None,
                value,
                aggregation: agg.into(),
                ..r.clone()
            });
        }
    }
    out
}

/// Runs every training point, policy and seed, evaluates each trained
/// policy at every evaluation point, and writes `training.csv` and
/// `results.csv` under the output directory. An `INCOMPLETE` marker file
/// exists in the directory until the run finishes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, format!("run `{}` started and has not finished\n", cfg.name))
        .map_err(|e| Error::io(&marker, e))?;

    let mut jobs = Vec::new();
    for point in cfg.training_points() {
        for &kind in &cfg.policies {
            for &seed in &cfg.seeds {
                jobs.push((point, kind, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::State(e.to_string()))?;
    let outputs: Vec<Result<JobOutput>> =
        pool.install(|| jobs.par_iter().map(|&(p, k, s)| run_job(cfg, p, k, s)).collect());

    let mut training = Vec::new();
    let mut rows = Vec::new();
    let mut illegal = 0;
    for out in outputs {
        let out = out?;
        training.extend(out.training);
        rows.extend(out.results);
        illegal += out.illegal_angles;
    }
    let agg = aggregate(&rows);
    rows.extend(agg);

    let training_csv = dir.join("training.csv");
    let results_csv = dir.join("results.csv");
    write_csv_atomic(&training_csv, &TRAINING_HEADER, training)?;
    emit_csv(&results_csv, &rows)?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(RunSummary {
        training_csv,
        results_csv,
        rows,
        illegal_angles: illegal,
    })
}

/// Named presets for the three figure reproductions. Episode counts and
/// episode lengths are scaled down from the full protocol so each preset
/// finishes in minutes; pass `full = true` for 1000 episodes of 200 steps.
pub fn preset(name: &str, seed: u64, full: bool) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig {
        name: name.to_string(),
        seeds: vec![seed],
        output_dir: PathBuf::from(format!("results/{name}")),
        train_episodes: if full { 1000 } else { 40 },
        eval_horizon: if full { 500 } else { 200 },
        ..ExperimentConfig::default()
    };
    cfg.env.steps_per_episode = if full { 200 } else { 25 };
    match name {
        "fig3" => {
            cfg.sweep.irs_sizes = Some(vec![[7, 7], [10, 10]]);
            cfg.sweep.powers = Some(vec![2.0]);
        }
        "fig4" => {
            cfg.policies = vec![PolicyKind::Ddpg];
            cfg.sweep.irs_sizes = Some(vec![[10, 10]]);
            cfg.sweep.powers = Some(vec![1.0, 2.0, 3.0, 4.0]);
            cfg.sweep.blockages = Some(vec![0, 1, 2]);
        }
        "fig5" => {
            cfg.policies = vec![PolicyKind::Ddpg];
            cfg.sweep.irs_sizes = Some(vec![[10, 10]]);
            cfg.sweep.snr_db = Some(vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
            cfg.sweep.velocities = Some(vec![0.5, 1.0, 2.0]);
        }
        _ => {
            return Err(Error::Input(format!(
                "unknown preset `{name}` (expected fig3, fig4 or fig5)"
            )))
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
