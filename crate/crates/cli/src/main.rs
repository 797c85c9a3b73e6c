use std::path::PathBuf;
use std::process::ExitCode;

use anc_cli::config::{ConfigSource, BUNDLED};
use anc_cli::{compare_command, identify_command, plot_command, run_command, RunOptions};
use clap::{Parser, Subcommand};

/// Active noise control simulations: classic and wavelet-thresholded FxLMS.
#[derive(Parser)]
#[command(name = "ancsim", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every controller of a scenario and write traces, metrics and a manifest.
    Run {
        /// Scenario file, or builtin:<name> for a bundled one.
        config: String,
        /// Override a config value, e.g. --set plant.path_noise_variance=0.01
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (replaces output_dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run controllers sequentially.
        #[arg(long)]
        serial: bool,
    },
    /// Compare runs of the same scenario.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Convergence target in dB (default: the first run's target).
        #[arg(long)]
        target: Option<f64>,
        /// Also write comparison.csv and overlay data here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a stored series as SVG.
    Plot {
        dir: PathBuf,
        /// noise-reduction, convergence, residual or signal
        #[arg(long)]
        which: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify a secondary path with LMS on white noise.
    Identify {
        /// builtin:<name> or a coefficient file.
        #[arg(long, default_value = "builtin:default-secondary")]
        secondary: String,
        /// Model length (default: length of the true path).
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, default_value_t = 20_000)]
        length: usize,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a bundled scenario, or list them.
    Scenario { name: Option<String> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> anc_cli::Result<ExitCode> {
    match command {
        Command::Run {
            config,
            overrides,
            seed,
            out,
            serial,
        } => {
            let source = ConfigSource::load(&config)?;
            let opts = RunOptions {
                overrides,
                seed,
                out,
                serial,
            };
            let outcome = run_command(&source, &opts)?;
            let m = &outcome.manifest;
            println!("wrote {}", outcome.out_dir.display());
            if let Some(t) = m.target_db {
                println!("target {t:.2} dB");
            }
            for c in &m.controllers {
                let fin = c
                    .final_r_db
                    .map(|v| format!("{v:.2} dB"))
                    .unwrap_or("-".into());
                let it = c
                    .iterations_to_target
                    .map(|v| v.to_string())
                    .unwrap_or("-".into());
                println!(
                    "{:<24} final R {fin:>10}  iterations to target {it:>7}",
                    c.name
                );
            }
            let diverged = outcome.diverged();
            if diverged.is_empty() {
                return Ok(ExitCode::SUCCESS);
            }
            for c in diverged {
                eprintln!(
                    "error: {} diverged at iteration {}: {}",
                    c.name,
                    c.diverged_at.unwrap_or_default(),
                    c.divergence.as_deref().unwrap_or("")
                );
            }
            Ok(ExitCode::from(2))
        }
        Command::Compare { dirs, target, out } => {
            let cmp = compare_command(&dirs, target)?;
            print!("{}", cmp.table());
            if let Some(dir) = out {
                cmp.write(&dir)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { dir, which, out } => {
            let path = plot_command(&dir, &which, out)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Identify {
            secondary,
            order,
            length,
            step,
            seed,
            out,
        } => {
            let id = identify_command(&secondary, order, length, step, seed, &out)?;
            println!(
                "wrote {} ({} taps, final error power {:.3e})",
                out.display(),
                id.model.len(),
                id.final_error_power
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario { name } => {
            match name {
                Some(n) => print!("{}", ConfigSource::bundled(&n)?.text),
                None => {
                    for (n, _) in BUNDLED {
                        println!("{n}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
