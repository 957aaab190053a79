//! Command-line front end for the train / diagnose / refine workflow.
//!
//! Every flag maps onto one key of the run configuration; the fully
//! resolved config is snapshotted into the run directory as manifest.toml.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use restcn::error::{Error, Result};
use restcn::runner::{self, DataKind, RunConfig};

#[derive(Parser)]
#[command(name = "restcn", version, about = "Res-TCN training, feature-map diagnosis and targeted refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Train on the built-in synthetic dataset.
    #[arg(long)]
    synthetic: bool,
    /// Dataset directory (NTU .skeleton files or a cached dataset).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// epochs override.
    #[arg(long)]
    epochs: Option<usize>,
    /// batch_size override.
    #[arg(long)]
    batch_size: Option<usize>,
    /// learning_rate override.
    #[arg(long)]
    lr: Option<f64>,
    /// target sequence length override.
    #[arg(long)]
    target_len: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.synthetic {
            cfg.data.kind = DataKind::Synthetic;
        }
        if let Some(root) = &self.data_root {
            cfg.data.root = Some(root.clone());
        }
        if let Some(epochs) = self.epochs {
            cfg.train.epochs = epochs;
        }
        if let Some(bs) = self.batch_size {
            cfg.train.batch_size = bs;
        }
        if let Some(lr) = self.lr {
            cfg.sgd.learning_rate = lr;
        }
        if let Some(t) = self.target_len {
            cfg.train.target_len = t;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a Res-TCN and write a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory name (auto-numbered when omitted).
        #[arg(long)]
        name: Option<String>,
    },
    /// Train the two-stream MS-Res-TCN with a targeted-attention mask.
    Refine {
        #[command(flatten)]
        config: ConfigArgs,
        /// Mask file (TOML with `joints`, `dims`, `note`).
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate a checkpoint: accuracy, per-class table, confusion CSV.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory holding the checkpoint.
        #[arg(long)]
        run: PathBuf,
        /// Which checkpoint inside the run: "best" or "final".
        #[arg(long, default_value = "final")]
        checkpoint: String,
        /// Second run for the side-by-side comparison table.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Per-class improvement that gets flagged in the comparison.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// Evaluate the training split instead of the test split.
        #[arg(long)]
        train_split: bool,
    },
    /// Decode recorded activations into skeleton CSVs and SVG strips.
    Decode {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "final")]
        checkpoint: String,
        /// Sample ids, comma separated.
        #[arg(long, value_delimiter = ',')]
        samples: Vec<String>,
        /// Layers to decode, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 4, 7, 10])]
        layers: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Frames per rendering strip.
        #[arg(long, default_value_t = 8)]
        panels: usize,
    },
    /// Filter response magnitudes over time for one class.
    Trace {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "final")]
        checkpoint: String,
        /// 0-based class id.
        #[arg(long)]
        class: usize,
        #[arg(long, default_value_t = 1)]
        layer: usize,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        /// Samples of the class to trace.
        #[arg(long, default_value_t = 5)]
        samples_per_class: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render first-layer filters as moving-skeleton strips.
    Filters {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "final")]
        checkpoint: String,
        /// Filter ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        ids: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the configured synthetic dataset and cache it on disk.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, name } => {
            let cfg = config.resolve()?;
            let outcome = runner::cmd_train(&cfg, name.as_deref())?;
            let last = outcome.report.epochs.last();
            println!("run directory: {}", outcome.run_dir.display());
            if let Some(e) = last {
                println!(
                    "epoch {:3}  train loss {:.4} acc {:.4} | test loss {:.4} acc {:.4} | lr {}",
                    e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc, e.lr
                );
            }
            Ok(())
        }
        Command::Refine { config, mask, name } => {
            let cfg = config.resolve()?;
            let data = runner::prepare_data(&cfg)?;
            let mask = runner::load_mask_file(&mask, &data.layout)?;
            drop(data);
            let outcome = runner::cmd_refine(&cfg, mask, name.as_deref())?;
            println!("run directory: {}", outcome.run_dir.display());
            if let Some(e) = outcome.report.epochs.last() {
                println!(
                    "epoch {:3}  train loss {:.4} acc {:.4} | test loss {:.4} acc {:.4} | lr {}",
                    e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc, e.lr
                );
            }
            Ok(())
        }
        Command::Eval { config, run, checkpoint, baseline, threshold, train_split } => {
            let cfg = config.resolve()?;
            let outcome = runner::cmd_eval(
                &run,
                &checkpoint,
                &cfg,
                baseline.as_deref(),
                threshold,
                train_split,
            )?;
            println!("per-class table: {}", outcome.report_path.display());
            Ok(())
        }
        Command::Decode { config, run, checkpoint, samples, layers, out, panels } => {
            if samples.is_empty() {
                return Err(Error::Param("--samples requires at least one id".into()));
            }
            let cfg = config.resolve()?;
            let written =
                runner::cmd_decode(&run, &checkpoint, &cfg, &samples, &layers, out.as_deref(), panels)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Trace { config, run, checkpoint, class, layer, top_k, samples_per_class, out } => {
            let cfg = config.resolve()?;
            let written = runner::cmd_trace(
                &run,
                &checkpoint,
                &cfg,
                class,
                layer,
                top_k,
                samples_per_class,
                out.as_deref(),
            )?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Filters { run, checkpoint, ids, out } => {
            let written = runner::cmd_filters(&run, &checkpoint, &ids, out.as_deref())?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Synth { config, out } => {
            let cfg = config.resolve()?;
            let dir = runner::cmd_synth(&cfg, &out)?;
            println!("cached dataset: {}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
