use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mae_cli::config::{DatasetConfig, HolePreset, HolesConfig};
use mae_cli::pipeline::{self, cache_dir, write_dataset, write_distances};
use mae_cli::{ablate_run, evaluate_run, presets, train_run, CliError, ConfigSource, Overrides, Result, RunOptions};
use mae_core::datasets::load_csv;
use mae_core::trainer::{precompute_distances, EpochRecord};
use mae_core::LocalMode;

#[derive(Parser)]
#[command(name = "mae", version, about = "Geometry-preserving autoencoders on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset into a CSV file.
    Generate {
        #[command(subcommand)]
        dataset: GenerateDataset,
    },
    /// Precompute kNN-graph geodesic distances for a CSV dataset.
    Distances {
        #[arg(long)]
        input: PathBuf,
        /// Trailing columns holding intrinsic coordinates.
        #[arg(long, default_value_t = 0)]
        intrinsic_dims: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train from a config file or bundled preset name.
    Train {
        config: String,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Recompute metrics and the embedding export for a finished run.
    Evaluate { manifest: PathBuf },
    /// Train the full, conformal, global-only and local-only variants.
    Ablate {
        config: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// List the bundled presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; defaults to `runs/<config name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print progress every this many epochs; 0 silences it.
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Subcommand)]
enum GenerateDataset {
    SwissRoll {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "default")]
        holes: Holes,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    ToroidalHelix {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        major_radius: f64,
        #[arg(long, default_value_t = 1.0)]
        minor_radius: f64,
        #[arg(long, default_value_t = 8)]
        windings: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Holes {
    Default,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Isometric,
    Conformal,
    None,
}

impl From<Mode> for LocalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Isometric => LocalMode::Isometric,
            Mode::Conformal => LocalMode::Conformal,
            Mode::None => LocalMode::None,
        }
    }
}

fn progress(every: usize) -> impl FnMut(&EpochRecord) {
    move |r| {
        if every > 0 && (r.epoch % every == 0) {
            eprintln!(
                "epoch {:>5}  total {:.4e}  recon {:.4e}  global {:.4e}  local {:.4e}",
                r.epoch, r.total, r.recon, r.global, r.local
            );
        }
    }
}

fn prepare(spec: &str, run: &RunArgs, overrides: Overrides) -> Result<(ConfigSource, mae_cli::RunConfig, PathBuf)> {
    let source = ConfigSource::resolve(spec)?;
    let mut config = source.parse()?;
    overrides.apply(&mut config);
    let out = run
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
    Ok((source, config, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { dataset } => {
            let (config, output) = match dataset {
                GenerateDataset::SwissRoll { n, holes, seed, output } => {
                    let holes = HolesConfig::Named(match holes {
                        Holes::Default => HolePreset::Default,
                        Holes::None => HolePreset::None,
                    });
                    (
                        DatasetConfig::SwissRoll {
                            n_points: n,
                            seed,
                            holes,
                        },
                        output,
                    )
                }
                GenerateDataset::ToroidalHelix {
                    n,
                    major_radius,
                    minor_radius,
                    windings,
                    seed,
                    output,
                } => (
                    DatasetConfig::ToroidalHelix {
                        n_points: n,
                        seed,
                        major_radius,
                        minor_radius,
                        windings,
                    },
                    output,
                ),
            };
            let cloud = pipeline::load_dataset(&config, std::path::Path::new("."))?;
            write_dataset(&cloud, &output)?;
            eprintln!("wrote {} points to {}", cloud.len(), output.display());
        }
        Command::Distances {
            input,
            intrinsic_dims,
            k,
            output,
        } => {
            let cloud = load_csv(&input, intrinsic_dims > 0, intrinsic_dims)?;
            let d = precompute_distances(cloud.points.view(), k)?;
            write_distances(&d, &output)?;
            eprintln!(
                "wrote {0}x{0} geodesic matrix (max {1:.6}) to {2}",
                d.n(),
                d.max(),
                output.display()
            );
        }
        Command::Train { config, run, mode } => {
            let overrides = Overrides {
                local_mode: mode.map(Into::into),
                epochs: run.epochs,
                seed: run.seed,
            };
            let (source, config, out) = prepare(&config, &run, overrides)?;
            let mut cb = progress(run.log_every);
            let outcome = train_run(
                &source.text,
                &config,
                RunOptions {
                    cache_dir: Some(cache_dir(&out)),
                    base_dir: source.base_dir.clone(),
                    on_epoch: Some(&mut cb),
                    out_dir: out,
                },
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.metrics).expect("serializable")
            );
            eprintln!("manifest: {}", outcome.manifest_path.display());
        }
        Command::Evaluate { manifest } => {
            let metrics = evaluate_run(&manifest)?;
            println!("{}", serde_json::to_string_pretty(&metrics).expect("serializable"));
        }
        Command::Ablate { config, run } => {
            let overrides = Overrides {
                local_mode: None,
                epochs: run.epochs,
                seed: run.seed,
            };
            let (source, config, out) = prepare(&config, &run, overrides)?;
            let mut cb = progress(run.log_every);
            let rows = ablate_run(
                &source.text,
                &config,
                RunOptions {
                    cache_dir: Some(cache_dir(&out)),
                    base_dir: source.base_dir.clone(),
                    on_epoch: Some(&mut cb),
                    out_dir: out,
                },
            )?;
            print!("{}", pipeline::ablation_csv(&rows));
        }
        Command::Presets { name } => match name {
            Some(name) => print!("{}", presets::preset(&name).ok_or(CliError::UnknownPreset(name))?),
            None => presets::names().for_each(|n| println!("{n}")),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
