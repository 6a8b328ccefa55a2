//! Command-line front end: presets, config files, experiment runs and the
//! self-test.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for
//! configuration or runtime errors.

pub mod config;
pub mod experiments;
pub mod output;
pub mod presets;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{parse_config, parse_onto, Experiment, ExperimentConfig, PlantMode};
pub use experiments::evaluate;
pub use output::{Check, Outcome, Summary};
pub use presets::{preset, preset_names, PRESETS};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "noiselock", version, about = "Noise-locking simulator and figure reproducer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a preset (see `presets`) or a config file.
    Run {
        /// Preset name or path to a config file.
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Frequency scale factor (overrides `scale_factor`).
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Run the acceptance criteria and print one line per criterion.
    Selftest {
        /// Only run these criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// List the presets.
    Presets,
    /// Print the full config text of a preset or config file.
    Show { target: String },
}

/// Loads `target` as a config file if it exists, else as a preset.
pub fn load_target(target: &str) -> Result<ExperimentConfig> {
    let path = Path::new(target);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return parse_config(&text);
    }
    preset(target).ok_or_else(|| {
        Error::Input(format!(
            "`{target}` is neither a config file nor a preset ({})",
            preset_names().collect::<Vec<_>>().join(", ")
        ))
    })
}

/// Applies command-line overrides and revalidates.
pub fn with_overrides(
    mut cfg: ExperimentConfig,
    seed: Option<u64>,
    out: Option<&Path>,
    scale: Option<f64>,
) -> Result<ExperimentConfig> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o.to_string_lossy().into_owned();
    }
    if let Some(f) = scale {
        cfg.scale_factor = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Evaluates `cfg` and writes its artifacts under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let outcome = evaluate(cfg)?;
    outcome.write(Path::new(&cfg.output_dir), &cfg.emit())?;
    Ok(outcome)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run {
            target,
            seed,
            out,
            scale,
        } => {
            let cfg = match load_target(&target).and_then(|c| with_overrides(c, seed, out.as_deref(), scale)) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("noiselock: {e}");
                    return EXIT_CONFIG;
                }
            };
            match run_experiment(&cfg) {
                Ok(outcome) => {
                    print!("{}", outcome.summary.to_text());
                    println!("# artifacts written to {}", cfg.output_dir);
                    if outcome.summary.passed() {
                        EXIT_OK
                    } else {
                        EXIT_FAILED
                    }
                }
                Err(e) => {
                    eprintln!("noiselock: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Selftest { only } => {
            let results = crate::selftest::run(&only, |r| println!("{}", r.line()));
            if results.iter().all(|r| r.passed) {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
        Command::Presets => {
            for (name, what) in PRESETS {
                println!("{name:<10} {what}");
            }
            EXIT_OK
        }
        Command::Show { target } => match load_target(&target) {
            Ok(c) => {
                print!("{}", c.emit());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("noiselock: {e}");
                EXIT_CONFIG
            }
        },
    }
}
