use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sada_bench::config::ExperimentConfig;
use sada_bench::harness::{describe, prepare, run_experiment};
use sada_bench::oracle_check::{run_oracle_checks, OracleCheckConfig};
use sada_bench::output::write_run;
use sada_bench::sweep::run_sweep;
use sada_bench::{BenchError, Result};

#[derive(Parser)]
#[command(name = "sada-bench", version, about = "Run and check streaming accelerated optimizers")]
struct Cli {
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv, manifest.txt and curve.svg.
    Run(RunArgs),
    /// Run the sweep section of a config, one subdirectory per point.
    Sweep(RunArgs),
    /// Print the resolved constants and schedule without running.
    Constants(ConfigArgs),
    /// Compare the engine against the exact Gaussian-design oracle.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Step size override, checked against the admissible bound.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value = "sada-out")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 32)]
    horizon: usize,
    /// Monte-Carlo replays of the inner loop.
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = 10_000)]
    k_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load(a: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&a.config)?;
    if let Some(s) = a.seed {
        cfg.run.seed = s;
    }
    if let Some(r) = a.replicates {
        cfg.run.replicates = r;
    }
    if a.eta.is_some() {
        cfg.method.eta = a.eta;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => {
            let cfg = load(&a.cfg)?;
            let setup = prepare(&cfg)?;
            let res = run_experiment(&cfg, &setup)?;
            write_run(&a.out, &cfg, &setup, &res, cfg.method.name.as_str())?;
            if !cli.quiet {
                let f = res.final_row();
                println!("method={} samples={} excess_risk={} stderr={}", res.method.as_str(), f.samples, f.excess_risk, f.stderr);
                if !res.diverged.is_empty() {
                    println!("diverged={}/{}", res.diverged.len(), res.replicates);
                }
                println!("wrote {}", a.out.display());
            }
        }
        Command::Sweep(a) => {
            let cfg = load(&a.cfg)?;
            let o = run_sweep(&cfg, &a.out)?;
            if !cli.quiet {
                for r in &o.rows {
                    match &r.result {
                        Some(res) => println!("{}={} method={} excess_risk={}", r.axis, r.value, r.method, res.final_row().excess_risk),
                        None => println!("{}={} method={} failed", r.axis, r.value, r.method),
                    }
                }
                if let Some(s) = o.rows.first().and_then(|r| r.slope) {
                    println!("loglog_slope={s}");
                }
                println!("wrote {}", o.dir.display());
            }
        }
        Command::Constants(a) => {
            let cfg = load(a)?;
            let setup = prepare(&cfg)?;
            for (k, v) in describe(&setup) {
                println!("{k}={v}");
            }
        }
        Command::OracleCheck(a) => {
            let oc = OracleCheckConfig { dim: a.dim, horizon: a.horizon, replays: a.budget, k_max: a.k_max, seed: a.seed, ..Default::default() };
            let results = run_oracle_checks(&oc)?;
            for r in &results {
                if !cli.quiet || !r.pass {
                    println!("{r}");
                }
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name).collect();
            if !failed.is_empty() {
                return Err(BenchError::OracleFailed(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" })).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
