use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use posegan::harness::{self, RunConfig, Variant};
use posegan::synthdata;

#[derive(Parser)]
#[command(name = "posegan", version, about = "Pose-transfer GAN training harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all three stages and write the loss CSV and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the ablation grid and write the comparison table.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "full,no-sn,no-wass,no-both,no-fft")]
        variants: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on a test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one source figure in another pair's pose.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: String,
        #[arg(long)]
        pose: String,
        #[arg(long)]
        out: PathBuf,
        /// Dataset root; defaults to the one the checkpoint was trained on.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write a synthetic train/test dataset.
    MakeData {
        #[arg(long)]
        n_train: usize,
        #[arg(long)]
        n_test: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> posegan::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

fn run(cmd: Command) -> posegan::Result<()> {
    match cmd {
        Command::Train {
            config,
            seed,
            out,
            resume,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let summary = harness::train(cfg, resume.as_deref())?;
            println!("{} iterations, checkpoint {}", summary.iterations, summary.checkpoint.display());
        }
        Command::Ablate { config, variants, out } => {
            let cfg = load_config(&config, None, out)?;
            let variants = Variant::parse_list(&variants)?;
            let report = harness::ablate(&cfg, &variants)?;
            info!("convergence threshold {}", report.threshold);
            print!("{}", report.table_csv());
        }
        Command::Evaluate { checkpoint, data, out } => {
            let rows = harness::evaluate(&checkpoint, &data, &out)?;
            println!("{} pairs evaluated, metrics in {}", rows.len(), out.display());
        }
        Command::Generate {
            checkpoint,
            source,
            pose,
            out,
            data,
        } => {
            harness::generate(&checkpoint, data.as_deref(), &source, &pose, &out)?;
            println!("wrote {}", out.display());
        }
        Command::MakeData {
            n_train,
            n_test,
            seed,
            out,
            size,
        } => {
            synthdata::make_data(&out, n_train, n_test, seed, size)?;
            println!("wrote {n_train} train and {n_test} test pairs to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Command::Ablate { variants, .. } = &cli.command {
        if let Err(e) = Variant::parse_list(variants) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
