use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use evidence_core::experiments::{
    asymptote, asymptote_artifacts, example2, example2_artifacts, table2, table2_artifacts, verify,
    verify_artifacts, Artifact, AsymptoteConfig, Example2Config, Format, RunConfig, VerifyConfig,
};

#[derive(Parser)]
#[command(
    name = "evidence",
    version,
    about = "Evidence and hyperparameter selection experiments"
)]
struct Cli {
    /// Directory for output files; printed to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Noise variance estimates for the two-point constant model.
    Table2,
    /// Log evidence and its parts along a growing prior scale.
    Asymptote {
        #[arg(long, default_value_t = 10)]
        points_per_decade: usize,
    },
    /// Two-exponential regression study over independent replicates.
    Example2 {
        #[arg(long, default_value_t = 2000)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        /// Grid resolution per dimension for the initial search.
        #[arg(long, default_value_t = 41)]
        grid: usize,
    },
    /// Checks every closed form against its brute-force oracle.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Negative control: flip the sign of the noise variance.
        #[arg(long, hide = true)]
        debug_corrupt_noise: bool,
    },
}

fn emit(out: Option<&Path>, artifacts: &[Artifact]) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for a in artifacts {
                let path = dir.join(&a.file_name);
                fs::write(&path, &a.contents)
                    .with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            for a in artifacts {
                print!("{}", a.contents);
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let format = match cli.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::Table2 => {
            let config = RunConfig {
                format,
                ..RunConfig::new("table2")
            };
            emit(out, &table2_artifacts(&config, &table2()?)?)?;
            Ok(true)
        }
        Command::Asymptote { points_per_decade } => {
            let config = RunConfig {
                format,
                ..RunConfig::new("asymptote")
            };
            let cfg = AsymptoteConfig {
                points_per_decade,
                ..AsymptoteConfig::default()
            };
            emit(out, &asymptote_artifacts(&config, &asymptote(&cfg)?)?)?;
            Ok(true)
        }
        Command::Example2 { runs, seed, grid } => {
            let config = RunConfig {
                seed: Some(seed),
                replicates: runs,
                format,
                ..RunConfig::new("example2")
            };
            let cfg = Example2Config {
                grid_points: grid,
                ..Example2Config::new(runs, seed)
            };
            emit(out, &example2_artifacts(&config, &example2(&cfg)?)?)?;
            Ok(true)
        }
        Command::Verify {
            seed,
            debug_corrupt_noise,
        } => {
            let config = RunConfig {
                seed: Some(seed),
                format,
                ..RunConfig::new("verify")
            };
            let cfg = VerifyConfig {
                corrupt_noise_sign: debug_corrupt_noise,
                ..VerifyConfig::new(seed)
            };
            let report = verify(&cfg);
            emit(out, &verify_artifacts(&config, &report)?)?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAILED {}: {}", c.name, c.detail);
            }
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e
                .downcast_ref::<evidence_core::Error>()
                .is_some_and(|e| matches!(e, evidence_core::Error::InvalidParameter(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
