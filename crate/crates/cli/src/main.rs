use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use irs_vlc::agents::{DdpgAgent, DqlAgent, RandomOrientation};
use irs_vlc::harness::{
    aggregate, base_point, emit_csv, evaluate_rows, preset, run_experiment, train_policy, training_env,
    ExperimentConfig, PolicyKind, TrainedPolicy,
};

#[derive(Parser)]
#[command(name = "irsvlc", version, about = "Mirror-array IRS visible-light network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training episodes; overrides the configuration.
    #[arg(long)]
    episodes: Option<usize>,
    /// Record per-decision latency (makes output timing-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy at the base scenario and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "ddpg")]
        policy: String,
    },
    /// Evaluate a checkpoint (or the random baseline) at every evaluation point.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`; omit for the random baseline.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run the full sweep described by the configuration.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a figure preset: fig3, fig4 or fig5.
    Preset {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Use the full-length protocol (1000 episodes of 200 steps).
        #[arg(long)]
        full: bool,
        #[arg(long)]
        timing: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(e) = common.episodes {
        cfg.train_episodes = e;
    }
    cfg.timing |= common.timing;
    Ok(cfg)
}

fn load_checkpoint(path: &Path) -> Result<TrainedPolicy> {
    let first = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    Ok(match first.as_str() {
        "ddpg-agent v1" => TrainedPolicy::Ddpg(Box::new(DdpgAgent::read_checkpoint(&mut r)?)),
        "dql-agent v1" => TrainedPolicy::Dql(Box::new(DqlAgent::read_checkpoint(&mut r)?)),
        other => bail!("{}: unrecognized checkpoint header `{other}`", path.display()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, seed, policy } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let kind = PolicyKind::parse(&policy)?;
            let (irs, blockages) = base_point(&cfg);
            let mut env = training_env(&cfg, irs, blockages, seed)?;
            let (trained, report) = train_policy(
                kind,
                &mut env,
                &cfg.ddpg,
                &cfg.dql,
                cfg.train_episodes,
                seed,
                cfg.timing,
            )?;
            std::fs::create_dir_all(&cfg.output_dir)
                .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
            let curve = cfg.output_dir.join("training.csv");
            report.write_csv(&curve)?;
            let ckpt = cfg.output_dir.join(format!("{}.ckpt", kind.name()));
            let write = |f: &mut dyn FnMut(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
                let mut w =
                    BufWriter::new(File::create(&ckpt).with_context(|| format!("creating {}", ckpt.display()))?);
                f(&mut w)
                    .and_then(|_| w.flush())
                    .with_context(|| format!("writing {}", ckpt.display()))
            };
            match &trained {
                TrainedPolicy::Ddpg(a) => write(&mut |w| a.write_checkpoint(w))?,
                TrainedPolicy::Dql(a) => write(&mut |w| a.write_checkpoint(w))?,
                TrainedPolicy::Random(_) => {}
            }
            println!(
                "trained {} for {} episodes; curve {}; illegal angles {}",
                kind.name(),
                report.len(),
                curve.display(),
                report.illegal_angles
            );
            if report.illegal_angles > 0 {
                bail!("{} mirror angles left [-pi/2, pi/2]", report.illegal_angles);
            }
        }
        Command::Eval {
            common,
            checkpoint,
            seeds,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            cfg.validate()?;
            let mut policy = match &checkpoint {
                Some(p) => load_checkpoint(p)?,
                None => TrainedPolicy::Random(RandomOrientation::new()),
            };
            let label = policy.as_policy().name().to_string();
            let (irs, blockages) = base_point(&cfg);
            let (mut rows, illegal) = evaluate_rows(&cfg, irs, blockages, &label, policy.as_policy(), &cfg.seeds)?;
            let agg = aggregate(&rows);
            rows.extend(agg);
            std::fs::create_dir_all(&cfg.output_dir)
                .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
            let out = cfg.output_dir.join("eval.csv");
            emit_csv(&out, &rows)?;
            println!("evaluated {label}; results {}; illegal angles {illegal}", out.display());
            if illegal > 0 {
                bail!("{illegal} mirror angles left [-pi/2, pi/2]");
            }
        }
        Command::Sweep { common, seeds, workers } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            report_run(&cfg)?;
        }
        Command::Preset {
            name,
            seed,
            out,
            workers,
            episodes,
            full,
            timing,
        } => {
            let mut cfg = preset(&name, seed, full)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(e) = episodes {
                cfg.train_episodes = e;
            }
            cfg.timing = timing;
            report_run(&cfg)?;
        }
    }
    Ok(())
}

fn report_run(cfg: &ExperimentConfig) -> Result<()> {
    let summary = run_experiment(cfg)?;
    println!(
        "wrote {} and {} ({} result rows); illegal angles {}",
        summary.training_csv.display(),
        summary.results_csv.display(),
        summary.rows.len(),
        summary.illegal_angles
    );
    if summary.illegal_angles > 0 {
        bail!("{} mirror angles left [-pi/2, pi/2]", summary.illegal_angles);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
