use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crossing_sim::runner::{self, OutputFormat};

#[derive(Parser)]
#[command(name = "crossing", version, about = "Zebra crossing interaction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication and write its episode, minute and summary tables.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run independent replications and aggregate them.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a demand grid and regress the pooled per-minute records.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        veh_rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        ped_rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the deliberate non-compliance probability to a target rate.
    Calibrate {
        #[arg(long)]
        scenario: PathBuf,
        /// Target overall non-compliance as a fraction in [0, 1].
        #[arg(long)]
        target: f64,
        /// Optional near-side target; requires --far-target.
        #[arg(long, requires = "far_target")]
        near_target: Option<f64>,
        #[arg(long, requires = "near_target")]
        far_target: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fmt_pct(m: Option<runner::MeanSd>) -> String {
    m.map(|m| format!("{:.2} (sd {:.2})", m.mean, m.sd))
        .unwrap_or_else(|| "n/a".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            format,
        } => {
            let format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
            let r = runner::run_scenario(&scenario, seed, &out, format)
                .with_context(|| format!("run of {} failed", scenario.display()))?;
            let s = &r.summary;
            println!(
                "seed {}: {} episodes, non-compliant {}%, LOS {:?}, near-accidents {}",
                s.seed,
                s.compliance.total_episodes,
                s.compliance
                    .pct_noncompliant_overall
                    .map_or("n/a".into(), |p| p.to_string()),
                s.los,
                s.near_accidents
            );
        }
        Command::Batch {
            scenario,
            seeds,
            out,
        } => {
            let s = runner::run_batch(&scenario, &seeds, &out)
                .with_context(|| format!("batch of {} failed", scenario.display()))?;
            println!(
                "{} runs: non-compliant {}%, near {}%, far {}%",
                s.seeds.len(),
                fmt_pct(s.pct_noncompliant),
                fmt_pct(s.pct_noncompliant_near),
                fmt_pct(s.pct_noncompliant_far)
            );
            if !s.failures.is_empty() {
                for f in &s.failures {
                    eprintln!("seed {} failed: {}", f.seed, f.error);
                }
                bail!("{} of {} seeds failed", s.failures.len(), seeds.len());
            }
        }
        Command::Sweep {
            scenario,
            veh_rates,
            ped_rates,
            seeds,
            out,
        } => {
            let s = runner::run_sweep(&scenario, &veh_rates, &ped_rates, &seeds, &out)
                .with_context(|| format!("sweep of {} failed", scenario.display()))?;
            let f = &s.regression.fit;
            println!(
                "{} runs, {} minutes ({} excluded): b_veh {:.4} (p {:.3e}), b_ped {:.4} (p {:.3e}), R2 {:.3}",
                s.runs,
                s.regression.minutes_used,
                s.regression.minutes_excluded,
                f.beta[1],
                f.p_values[1],
                f.beta[2],
                f.p_values[2],
                f.r_squared
            );
        }
        Command::Calibrate {
            scenario,
            target,
            near_target,
            far_target,
            seeds,
            out,
        } => {
            let sides = near_target.zip(far_target);
            let r = runner::run_calibration(&scenario, target, sides, &seeds, &out)
                .with_context(|| format!("calibration of {} failed", scenario.display()))?;
            println!(
                "p_deliberate {:.4}: measured {:.4} (floor {:.4})",
                r.overall.p_deliberate, r.overall.measured_rate, r.overall.floor
            );
            if let Some(s) = r.per_side {
                println!(
                    "per side: p_near {:.4} -> {:.4}, p_far {:.4} -> {:.4}",
                    s.result.p_near, s.result.measured.near, s.result.p_far, s.result.measured.far
                );
            }
        }
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
