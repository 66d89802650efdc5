use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smc_ebm::{Algorithm, Resampler};
use smc_ebm_cli::presets::PRESETS;
use smc_ebm_cli::{
    compare_runs, render_table, run_experiment, CliError, ExperimentConfig, Overrides, RunReport,
    THREADS_ENV,
};

#[derive(Parser)]
#[command(name = "smc-ebm", version, about = "Train energy-based models with Jarzynski-weighted SMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its output directory.
    Run {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "PATH")]
        out_dir: Option<PathBuf>,
        /// jarzynski, pcd or cd
        #[arg(long)]
        algorithm: Option<Algorithm>,
        /// multinomial, stratified or systematic
        #[arg(long)]
        resampler: Option<Resampler>,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Tabulate final results of training runs that share a teacher.
    Compare {
        #[arg(value_name = "RUN_DIR")]
        runs: Vec<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    ExitCode::from(run_cli(std::env::args_os()))
}

/// Parses `args` and runs the command. Returns the process exit code.
fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| CliError::Config(format!("{THREADS_ENV}={value:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, preset, seed, out_dir, algorithm, resampler, dry_run } => {
            if config.is_none() && preset.is_none() {
                return Err(CliError::Usage("give --config or --preset".into()));
            }
            let overrides = Overrides { preset, seed, out_dir, algorithm, resampler };
            let cfg = ExperimentConfig::load(config.as_deref(), &overrides)?;
            if dry_run {
                print!("{}", cfg.to_toml()?);
                return Ok(());
            }
            match run_experiment(&cfg)? {
                RunReport::Train(s) => {
                    println!("{}: {} records, {} resamples", cfg.out_dir.display(), s.records, s.resample_count);
                    if let Some(p) = s.p_final {
                        println!("p_K = {p:.4}");
                    }
                    if let (Some(a), Some(b)) = (s.a_error, s.b_error) {
                        println!("|a-a*| = {a:.4}, |b-b*| = {b:.4}");
                    }
                    if let Some(kl) = s.kl_final {
                        println!("KL = {kl:.5}");
                    }
                }
                RunReport::Reduced(s) => {
                    for r in &s.regimes {
                        println!("{:<10} {:<9} z_end = {:.4}  hops = {}", r.regime, r.outcome, r.z_end, r.hops);
                    }
                }
            }
            Ok(())
        }
        Command::Compare { runs } => {
            print!("{}", render_table(&compare_runs(&runs)?));
            Ok(())
        }
        Command::Presets => {
            for (name, about) in PRESETS {
                println!("{name:<16} {about}");
            }
            Ok(())
        }
    }
}
