use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liquidnet::arch::{Task, Variant};
use liquidnet::eval::average_precision;
use liquidnet::experiment::{self, ExperimentConfig};
use liquidnet::Error;

/// Liquid detection and tracking experiments on simulated pouring scenes.
#[derive(Debug, Parser)]
#[command(name = "liquidnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate, label and render the dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train one network on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        net: Variant,
        #[arg(long)]
        task: Task,
    },
    /// Evaluate trained networks on the validation split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task: Task,
        /// Networks to evaluate (repeatable); defaults to every trained one.
        #[arg(long)]
        net: Vec<Variant>,
    },
    /// Render precision/recall SVGs from report CSVs.
    Plot {
        /// Plot every report of this experiment.
        #[arg(long, required_unless_present = "report")]
        config: Option<PathBuf>,
        /// Report CSV to plot (repeatable).
        #[arg(long)]
        report: Vec<PathBuf>,
        /// Output directory (defaults to the experiment's plots directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidSpec(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other),
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = load(&common)?;
            let s = experiment::gen_data(&cfg)?;
            println!(
                "wrote {} sequences ({} without liquid, {} frames) to {}",
                s.sequences,
                s.negatives,
                s.frames,
                s.data_dir.display()
            );
            println!(
                "liquid pixels: {} visible, {} total",
                s.visible_liquid_pixels, s.total_liquid_pixels
            );
        }
        Command::Train { common, net, task } => {
            let cfg = load(&common)?;
            let s = experiment::train_network(&cfg, net, task)?;
            if !s.inherited.is_empty() {
                println!("initialised {} tensors from the cnn checkpoint", s.inherited.len());
            }
            let k = (s.log.rows.len() / 10).max(1);
            let (first, last) = s.log.window_means(k);
            println!(
                "trained {net} on {task}: {} iterations, loss {first:.4} -> {last:.4}",
                s.log.rows.len()
            );
            println!("checkpoint {}", s.checkpoint.display());
            println!("log {}", s.log_path.display());
        }
        Command::Eval { common, task, net } => {
            let cfg = load(&common)?;
            let s = experiment::evaluate(&cfg, task, &net)?;
            for c in &s.curves {
                let aps: Vec<String> = c
                    .curve
                    .slacks
                    .iter()
                    .map(|&sl| {
                        let ap = average_precision(&c.curve, sl).expect("slack is on the curve");
                        format!("slack {sl}: {ap:.3}")
                    })
                    .collect();
                println!("{} AP {}", c.network, aps.join(", "));
            }
            for n in &s.negatives {
                println!(
                    "{} false-positive rate on liquid-free sequences at {}: {:.5}",
                    n.network, n.threshold, n.false_positive_rate
                );
            }
            println!("{} heatmaps for {} validation frames", s.heatmaps, s.validation_frames);
            println!("report {}", s.files.report.display());
        }
        Command::Plot { config, report, out } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let reports = match (&cfg, report.is_empty()) {
                (Some(c), true) => experiment::existing_reports(c),
                _ => report,
            };
            let out = match (out, &cfg) {
                (Some(o), _) => o,
                (None, Some(c)) => c.layout().plots_dir(),
                (None, None) => return Err(Failure::Usage("--out is required without --config".into())),
            };
            for p in experiment::plot(&reports, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
