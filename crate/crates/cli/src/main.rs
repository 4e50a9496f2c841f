use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use snpe_core::harness::{
    cmd_compare, cmd_metrics, cmd_reference, cmd_train, cmd_variance_check, ExperimentConfig, DEFAULT_TAUS,
};
use snpe_core::smcabc::{DEFAULT_POPULATION, DESK_BUDGET};
use snpe_core::Error;

#[derive(Parser)]
#[command(name = "snpe", version, about = "Variance-reduced sequential neural posterior estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on every seed and write metrics, costs and checkpoints.
    Train(TrainArgs),
    /// Generate a reference posterior with SMC-ABC.
    Reference(ReferenceArgs),
    /// Empirical variance of the calibration kernel against its bandwidth.
    VarianceCheck(VarianceArgs),
    /// Run several configurations and SMC-ABC at matched simulation budgets.
    Compare(CompareArgs),
    /// Recompute metrics from stored checkpoints.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    simulations: Option<usize>,
    #[arg(long)]
    ack: Option<bool>,
    #[arg(long)]
    ds: Option<bool>,
    #[arg(long)]
    misr: Option<bool>,
    #[arg(long)]
    pst: Option<bool>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    seed_parallel: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let t = &mut cfg.train;
        if let Some(v) = self.rounds {
            t.rounds = v;
        }
        if let Some(v) = self.simulations {
            t.simulations = v;
        }
        if let Some(v) = self.ack {
            t.ack = v;
        }
        if let Some(v) = self.ds {
            t.ds = v;
        }
        if let Some(v) = self.misr {
            t.misr = v;
        }
        if let Some(v) = self.pst {
            t.pst = v;
        }
        if let Some(v) = self.alpha {
            t.alpha = v;
        }
        if let Some(v) = self.beta {
            t.beta = v;
        }
        if let Some(p) = &self.reference {
            cfg.reference = Some(p.clone());
        }
        if self.seed_parallel {
            cfg.seed_parallel = true;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "seed", required = true)]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from the last stored checkpoint of each seed.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReferenceArgs {
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = DESK_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = DEFAULT_POPULATION)]
    population: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VarianceArgs {
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn load(path: &Path, seeds: &[u64]) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if !seeds.is_empty() {
        cfg.seeds = seeds.to_vec();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(a) => {
            let mut cfg = load(&a.config, &a.seeds)?;
            a.overrides.apply(&mut cfg);
            let outcome = cmd_train(&cfg, &a.out, a.resume)?;
            println!("{}", outcome.layout.metrics().display());
        }
        Command::Reference(a) => {
            let r = cmd_reference(&a.model, a.count, a.population, a.budget, a.seed, &a.out)?;
            info!("{} generations, final tolerance {}", r.meta.generations, r.meta.final_epsilon);
            println!("{}", a.out.display());
        }
        Command::VarianceCheck(a) => {
            let taus = a.taus.unwrap_or_else(|| DEFAULT_TAUS.to_vec());
            let r = cmd_variance_check(a.dim, &taus, a.draws, a.seed, a.out.as_deref())?;
            println!("tau,mean,variance");
            for row in &r.rows {
                println!("{},{},{}", row.tau, row.mean, row.variance);
            }
            println!("slope {}", r.slope);
            if let (Some(b), Some(se)) = (r.bias_ratio, r.bias_ratio_se) {
                println!("bias_ratio {b} se {se}");
            }
        }
        Command::Compare(a) => {
            let mut cfgs = Vec::new();
            for p in &a.configs {
                cfgs.push(load(p, &a.seeds)?);
            }
            let rows = cmd_compare(&cfgs, &a.out)?;
            println!("{} rows", rows.len());
        }
        Command::Metrics(a) => {
            let cfg = load(&a.config, &a.seeds)?;
            let rows = cmd_metrics(&cfg, &a.out)?;
            println!("{} rows", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={:?}", e.kind(), message);
            ExitCode::FAILURE
        }
    }
}
