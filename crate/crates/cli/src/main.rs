//! `nilm-al`: run active-learning experiments for NILM from TOML configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::LevelFilter;
use nilm_al::data::{write_csv, synthesize, SynthConfig};
use nilm_al::experiment::{
    compare, export_plots, read_records, read_totals, run_experiment, run_sweep, run_total_baseline, write_run,
    write_comparison, write_sweep, write_totals, AcquisitionFunction, Context, ExperimentConfig, SweepArm, SweepConfig,
    RECORDS_FILE, TOTALS_FILE,
};
use nilm_al::verify::{run_all, Fault};
use nilm_al::{Error, Result};
use rayon::prelude::*;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "NILM_AL_THREADS";

#[derive(Parser)]
#[command(name = "nilm-al", version, about = "Uncertainty-driven active learning for NILM")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one acquisition function for every configured seed.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides `run.output_dir`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Comma-separated seeds; overrides `run.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Compare acquisition functions over seeds, sharing base models per seed.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Acquisition functions (entropy, mi, random); overrides `[sweep]`.
        #[arg(long, value_delimiter = ',')]
        functions: Option<Vec<String>>,
        /// Seeds for entropy and mi; also random unless --random-seeds is given.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        random_seeds: Option<Vec<u64>>,
        /// Include the total baseline with these seeds.
        #[arg(long, value_delimiter = ',')]
        total_seeds: Option<Vec<u64>>,
    },
    /// Train on train + pool houses over the whole period.
    BaselineTotal {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Generate a synthetic dataset as wide CSV.
    Synth {
        /// TOML with synthesizer settings; defaults when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check gradients, mixture moments, MI and kernel weights against oracles.
    Verify {
        /// Break a component on purpose to confirm its check fails.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Rebuild comparison and plot tables from a results directory.
    ExportPlots {
        #[arg(short, long)]
        input: PathBuf,
        /// Defaults to `<input>/plots`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Gradient,
}

fn load(config: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    Ok(cfg)
}

fn context(mut cfg: ExperimentConfig, output: Option<PathBuf>, seeds: Option<Vec<u64>>) -> Result<(Context, PathBuf)> {
    if let Some(o) = output {
        cfg.run.output_dir = o;
    }
    if let Some(s) = seeds {
        cfg.run.seeds = s;
    }
    let dir = cfg.run.output_dir.clone();
    Ok((Context::new(cfg)?, dir))
}

fn sweep_spec(
    cfg: &ExperimentConfig,
    functions: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    random_seeds: Option<Vec<u64>>,
    total_seeds: Option<Vec<u64>>,
) -> Result<SweepConfig> {
    let mut spec = cfg.sweep.clone().unwrap_or_default();
    if let Some(fs) = functions {
        let seeds = seeds.clone().unwrap_or_else(|| cfg.run.seeds.clone());
        spec.arms = fs
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                let function: AcquisitionFunction = f.parse()?;
                let s = match (function, &random_seeds) {
                    (AcquisitionFunction::Random, Some(r)) => r.clone(),
                    _ => seeds.clone(),
                };
                Ok(SweepArm { function, seeds: s })
            })
            .collect::<Result<_>>()?;
    } else if let Some(s) = seeds {
        for arm in &mut spec.arms {
            arm.seeds = s.clone();
        }
    }
    if let Some(t) = total_seeds {
        spec.total_seeds = t;
    }
    let v = spec.violations();
    if v.is_empty() {
        Ok(spec)
    } else {
        Err(Error::Config(v))
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, output, seeds } => {
            let (ctx, dir) = context(load(&config)?, output, seeds)?;
            let function = ctx.config.acquisition.function;
            let runs = ctx
                .config
                .run
                .seeds
                .par_iter()
                .map(|&s| run_experiment(&ctx, function, s))
                .collect::<Result<Vec<_>>>()?;
            write_run(&dir, &ctx.config, &runs)?;
            println!("wrote {} iteration records to {}", runs.iter().map(|r| r.records.len()).sum::<usize>(), dir.display());
        }
        Command::Sweep {
            config,
            output,
            functions,
            seeds,
            random_seeds,
            total_seeds,
        } => {
            let mut cfg = load(&config)?;
            let spec = sweep_spec(&cfg, functions, seeds, random_seeds, total_seeds)?;
            cfg.sweep = Some(spec.clone());
            let (ctx, dir) = context(cfg, output, None)?;
            let out = run_sweep(&ctx, &spec)?;
            write_sweep(&dir, &ctx.config, &out)?;
            println!("wrote sweep of {} runs to {}", out.runs.len(), dir.display());
        }
        Command::BaselineTotal { config, output, seeds } => {
            let (ctx, dir) = context(load(&config)?, output, seeds)?;
            let totals = ctx
                .config
                .run
                .seeds
                .par_iter()
                .map(|&s| run_total_baseline(&ctx, s))
                .collect::<Result<Vec<_>>>()?;
            write_totals(&dir, &ctx.config, &totals)?;
            for t in &totals {
                for (a, r) in &t.rmse {
                    println!("seed {} {a}: {r:.2} W", t.seed);
                }
            }
        }
        Command::Synth { config, seed, output } => {
            let cfg = match config {
                Some(p) => SynthConfig::load(&p)?,
                None => SynthConfig::default(),
            };
            let v = cfg.violations();
            if !v.is_empty() {
                return Err(Error::Config(v));
            }
            write_csv(&synthesize(&cfg, seed)?, &output)?;
            println!("wrote {} houses x {} days to {}", cfg.houses, cfg.days, output.display());
        }
        Command::Verify { inject_fault } => {
            let fault = inject_fault.map(|FaultArg::Gradient| Fault::CorruptGradient);
            let results = run_all(fault);
            for r in &results {
                println!(
                    "[{}] {} ({:.1}s): {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.elapsed.as_secs_f64(),
                    r.detail
                );
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Error::Validation(format!("{failed} verification check(s) failed")));
            }
        }
        Command::ExportPlots { input, output } => {
            let records = read_records(&input.join(RECORDS_FILE))?;
            let totals_path = input.join(TOTALS_FILE);
            let totals = if totals_path.exists() { read_totals(&totals_path)? } else { Vec::new() };
            let rows = compare(&records);
            let out = output.unwrap_or_else(|| input.join("plots"));
            export_plots(&out, &rows, &totals)?;
            write_comparison(&out, &rows)?;
            println!("wrote plot data for {} series rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{raw}`");
                return ExitCode::from(2);
            }
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(v)) => {
            eprintln!("config error:");
            for m in v {
                eprintln!("  - {m}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
