use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use camel::commands::{self, CommandError};
use camel::config::{RunConfig, SEED_ENV};
use camel::sim::PolicyKind;

#[derive(Parser)]
#[command(name = "camel", version, about = "Learned cost maps for off-road navigation")]
struct Cli {
    /// JSON run configuration; defaults are used for anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded scene files.
    GenScenes {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        difficulty: f64,
        /// First scene seed; defaults to the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drive the expert through scenes and record demonstrations.
    GenDataset {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        instances: usize,
        /// Keep one LiDAR return in four.
        #[arg(long)]
        sparse: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset index and write checkpoints and the loss curve.
    Train {
        /// Path to index.jsonl, or the directory holding it.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start from these weights instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Predicted and handcrafted cost maps and paths for one grid file.
    Plan {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A .cmlg grid file.
        #[arg(long)]
        instance: PathBuf,
        /// Bearing to the goal, radians, left positive.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        bearing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop rollouts with a summary report.
    Rollout {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        scenes: PathBuf,
        /// camel, expert, or handcrafted; repeat or comma-separate.
        #[arg(long, value_delimiter = ',', required = true)]
        policy: Vec<PolicyKind>,
        /// Per-rollout CSV; the per-policy summary goes next to it.
        #[arg(long)]
        report: PathBuf,
        /// Directory for trajectory CSVs.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CommandError> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(cfg.with_env_seed(std::env::var(SEED_ENV).ok().as_deref())?)
}

fn index_path(dataset: &Path) -> PathBuf {
    if dataset.is_dir() {
        dataset.join(camel::train::INDEX_FILE)
    } else {
        dataset.to_path_buf()
    }
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let cfg = load_config(cli.config.as_deref())?;
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CommandError::Argument("no command given; see --help".into()));
    };
    match command {
        Command::GenScenes {
            count,
            difficulty,
            seed,
            out,
        } => {
            let files = commands::gen_scenes(count, difficulty, seed.unwrap_or(cfg.seed), &out)?;
            println!("wrote {} scenes to {}", files.len(), out.display());
        }
        Command::GenDataset {
            scenes,
            instances,
            sparse,
            out,
        } => {
            let s = commands::gen_dataset(&cfg, &scenes, instances, sparse, &out)?;
            println!(
                "wrote {} records from {} drives to {} (mean {:.0} points per grid)",
                s.records,
                s.drives,
                s.index.display(),
                s.mean_points
            );
        }
        Command::Train { dataset, out, resume } => {
            let s = commands::train(&cfg, &index_path(&dataset), &out, resume.as_deref())?;
            println!(
                "best val mse {:.5} at epoch {}; test mse {:.5}; outputs in {}",
                s.best_val_mse,
                s.best_epoch,
                s.test_mse,
                out.display()
            );
        }
        Command::Plan {
            checkpoint,
            instance,
            bearing,
            out,
        } => {
            let r = commands::plan(&cfg, &checkpoint, &instance, bearing, &out)?;
            for (name, o) in [("camel", &r.camel), ("handcrafted", &r.handcrafted)] {
                match o {
                    Some(o) => println!(
                        "{name}: goal cell {:?}, {} path cells, steering {:.3}, throttle {:.3}",
                        o.goal_cell,
                        o.path.len(),
                        o.command.steering,
                        o.command.throttle
                    ),
                    None => println!("{name}: no admissible goal"),
                }
            }
        }
        Command::Rollout {
            checkpoint,
            scenes,
            policy,
            report,
            trajectories,
        } => {
            let summary = commands::rollout_scenes(
                &cfg,
                checkpoint.as_deref(),
                &scenes,
                &policy,
                &report,
                trajectories.as_deref(),
            )?;
            print!("{}", commands::summary_csv(&summary));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
