use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use uavsem::env::UavEnv;
use uavsem::harness::{self, ExperimentSpec, Mode, PolicyChoice};
use uavsem::tqc;
use uavsem::{Result, ScenarioConfig};

#[derive(Parser)]
#[command(name = "uavsem", version, about = "UAV semantic relay simulator and TQC trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an experiment file and report every problem.
    Validate(Common),
    /// Print the default experiment file.
    Defaults,
    /// Run whatever the experiment file's `mode` asks for.
    Run(Common),
    /// Train an agent and write its checkpoint and episode log.
    Train(Common),
    /// Evaluate the heuristic or a checkpoint; writes summaries and traces.
    Eval(Common),
    SweepTau(Common),
    SweepSnr(Common),
    Heatmap(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explicit seeds, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "repetitions")]
    seeds: Option<Vec<u64>>,
    /// Run seeds `seed_base..seed_base+N`.
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Actor checkpoint to evaluate instead of the heuristic.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Train in double precision.
    #[arg(long)]
    f64: bool,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(out) = &self.out {
            spec.output_dir = out.clone();
        }
        if let Some(seeds) = &self.seeds {
            spec.repetitions = seeds.len();
            spec.seeds = seeds.clone();
        } else if let Some(n) = self.repetitions {
            spec = spec.with_seeds(self.seed_base, n);
        }
        if let Some(ck) = &self.checkpoint {
            spec.policy = PolicyChoice::Checkpoint(ck.clone());
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn train(spec: &ExperimentSpec, double: bool) -> Result<()> {
    let seed = spec.seeds[0];
    let mut env = UavEnv::with_codec(spec.scenario.clone(), spec.codec()?)?;
    let (checkpoint, log) = if double {
        let out = tqc::train::<f64, _>(&mut env, spec.tqc.clone(), seed)?;
        (out.agent.checkpoint(), out.log)
    } else {
        let out = tqc::train::<f32, _>(&mut env, spec.tqc.clone(), seed)?;
        (out.agent.checkpoint(), out.log)
    };
    let dir = &spec.output_dir;
    fs::create_dir_all(dir)?;
    checkpoint.save(&dir.join("checkpoint.json"))?;
    info!("wrote {}", dir.join("checkpoint.json").display());
    write(dir, "train_log.csv", &tqc::log_to_csv(&log)?)?;
    println!("log sha256 {}", tqc::log_checksum(&log));
    Ok(())
}

fn eval(spec: &ExperimentSpec) -> Result<()> {
    let codec = spec.codec()?;
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let cfg = ScenarioConfig {
            rng_seed: seed,
            ..spec.scenario.clone()
        };
        let mut env = UavEnv::with_codec(cfg.clone(), codec.clone())?;
        let mut policy = harness::build_policy(&spec.policy, spec.heuristic)?;
        let e = harness::evaluate(&mut env, policy.as_mut(), seed)?;
        println!(
            "seed {seed}: avg_aoi {:.4} min_sss {:.4} drops {}/{} objective {:.4}",
            e.summary.avg_aoi, e.summary.min_sss, e.summary.drops, e.summary.tasks, e.summary.objective
        );
        if rows.is_empty() {
            write(&spec.output_dir, "gu_trace.csv", &harness::to_csv(&harness::gu_trace(env.history()))?)?;
            write(&spec.output_dir, "uav_trace.csv", &harness::to_csv(&harness::uav_trace(env.history()))?)?;
        }
        rows.push(harness::EvalRow::new(&cfg, seed, &e));
    }
    write(&spec.output_dir, "eval.csv", &harness::to_csv(&rows)?)
}

fn sweep_tau(spec: &ExperimentSpec) -> Result<()> {
    let rows = harness::run_tau_sweep_with(spec, spec.codec()?)?;
    write(&spec.output_dir, "tau_sweep.csv", &harness::to_csv(&rows)?)
}

fn sweep_snr(spec: &ExperimentSpec) -> Result<()> {
    let rows = harness::run_snr_sweep_with(spec, spec.codec()?)?;
    write(&spec.output_dir, "snr_sweep.csv", &harness::to_csv(&rows)?)
}

fn heatmap(spec: &ExperimentSpec) -> Result<()> {
    let rows = harness::run_heatmap_with(spec, spec.codec()?)?;
    write(&spec.output_dir, "heatmap.csv", &harness::to_csv(&rows)?)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(c) => {
            let spec = c.spec()?;
            println!("ok: {} slots, config {}", spec.scenario.num_slots(), spec.scenario.config_hash());
            Ok(())
        }
        Command::Defaults => {
            print!("{}", harness::spec_to_toml(&ExperimentSpec::default())?);
            Ok(())
        }
        Command::Run(c) => {
            let spec = c.spec()?;
            match spec.mode {
                Mode::Train => train(&spec, c.f64),
                Mode::Eval => eval(&spec),
                Mode::Sweep => sweep_tau(&spec).and_then(|_| sweep_snr(&spec)).and_then(|_| heatmap(&spec)),
            }
        }
        Command::Train(c) => train(&c.spec()?, c.f64),
        Command::Eval(c) => eval(&c.spec()?),
        Command::SweepTau(c) => sweep_tau(&c.spec()?),
        Command::SweepSnr(c) => sweep_snr(&c.spec()?),
        Command::Heatmap(c) => heatmap(&c.spec()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
