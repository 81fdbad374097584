//! Batch CLI for backorder-risk experiments: data preparation, statistical
//! screening, model training and evaluation, multi-model comparisons,
//! permutation importance, economics reports, and synthetic data.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use backorder::dataset::{generate_synthetic, write_csv, SyntheticSpec};
use backorder::pipeline::{self, BbcSettings, MatrixConfig, ModelSpec, RunConfig};

#[derive(Parser)]
#[command(
    name = "backorder",
    version,
    about = "Train, evaluate, and economically score backorder-risk classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON); defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory (also via BACKORDER_OUT)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread count (also via BACKORDER_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Tune over the full hyperparameter lattice instead of the desk-scale
    /// sub-lattice
    #[arg(long, global = true)]
    full_grid: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load, impute, transform, and split; write the processed dataset
    Prepare,
    /// Write the attribute screening report (statistic, p-value per column)
    Screen,
    /// Train one model; write reports, curves, and serialized artifacts
    Train,
    /// Score a saved model on the config's test split
    Evaluate {
        /// Directory holding model.json, imputer.json, transform.json
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Run a model x transform comparison matrix
    Matrix,
    /// Permutation importance for a saved model
    Importance {
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Economics report (optimal profit, misclassification cost) for a
    /// saved model
    Economics {
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Generate a synthetic inventory CSV
    Synth {
        #[arg(long, default_value_t = 20_000)]
        rows: usize,
        #[arg(long, default_value_t = 0.01)]
        positive_rate: f64,
        #[arg(long, default_value_t = 6)]
        informative: usize,
        /// Output CSV path
        #[arg(long)]
        out_file: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    configure_threads(&cli)?;
    match &cli.command {
        Command::Synth {
            rows,
            positive_rate,
            informative,
            out_file,
        } => {
            let spec = SyntheticSpec {
                n_rows: *rows,
                positive_rate: *positive_rate,
                n_informative: *informative,
                seed: cli.seed.unwrap_or(0),
            };
            let table = generate_synthetic(&spec).context("generating synthetic data")?;
            write_csv(&table, out_file).context("writing synthetic CSV")?;
            println!("wrote {} rows to {}", table.row_count(), out_file.display());
        }
        Command::Prepare => {
            let config = resolve_config(&cli)?;
            pipeline::prepare_to_dir(&config)?;
            println!("prepared dataset in {}", config.output_dir.display());
        }
        Command::Screen => {
            let config = resolve_config(&cli)?;
            let rows = pipeline::screen_to_dir(&config)?;
            println!(
                "screened {} attributes; report in {}",
                rows.len(),
                config.output_dir.display()
            );
        }
        Command::Train => {
            let config = resolve_config(&cli)?;
            let report = pipeline::run_experiment(&config)?;
            print_rows(&report);
            println!("artifacts in {}", config.output_dir.display());
        }
        Command::Evaluate { model_dir } => {
            let config = resolve_config(&cli)?;
            let report = pipeline::evaluate_saved(model_dir, &config)?;
            print_rows(&report);
        }
        Command::Matrix => {
            let matrix = resolve_matrix(&cli)?;
            let out = matrix.base.output_dir.clone();
            let report = pipeline::run_matrix_to_dir(&matrix, &out)?;
            print_rows(&report);
            println!("comparison in {}", out.display());
        }
        Command::Importance { model_dir } => {
            let config = resolve_config(&cli)?;
            let importance = pipeline::importance_saved(model_dir, &config)?;
            for f in importance.features.iter().take(10) {
                println!(
                    "{:<20} {:+.4} (std {})",
                    f.feature,
                    f.mean_drop,
                    f.std_dev.map(|s| format!("{s:.4}")).unwrap_or_default()
                );
            }
        }
        Command::Economics { model_dir } => {
            let config = resolve_config(&cli)?;
            let report = pipeline::economics_saved(model_dir, &config)?;
            for row in &report.rows {
                if let Some(e) = &row.economics {
                    println!(
                        "{}: optimal profit {:.2}, misclassification cost {:.2}",
                        row.model, e.optimal_profit, e.misclassification_cost
                    );
                }
            }
        }
    }
    Ok(())
}

fn configure_threads(cli: &Cli) -> anyhow::Result<()> {
    let threads = cli.threads.or_else(|| {
        std::env::var("BACKORDER_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

/// Loads the run config and applies the CLI/environment overrides: seed,
/// output directory, and the full-grid switch.
fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, cli);
    Ok(config)
}

fn resolve_matrix(cli: &Cli) -> anyhow::Result<MatrixConfig> {
    let mut matrix = match &cli.config {
        Some(path) => MatrixConfig::load(path)
            .with_context(|| format!("loading matrix config {}", path.display()))?,
        None => MatrixConfig::default(),
    };
    apply_overrides(&mut matrix.base, cli);
    if cli.full_grid {
        for model in &mut matrix.models {
            enable_full_grid(model);
        }
    }
    Ok(matrix)
}

fn apply_overrides(config: &mut RunConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var("BACKORDER_OUT").ok().map(PathBuf::from));
    if let Some(out) = out {
        config.output_dir = out;
    }
    if config.output_dir.as_os_str().is_empty() {
        config.output_dir = PathBuf::from("out");
    }
    if cli.full_grid {
        enable_full_grid(&mut config.model);
    }
}

fn enable_full_grid(model: &mut ModelSpec) {
    let bbc: &mut BbcSettings = match model {
        ModelSpec::Bbc(settings) => settings,
        ModelSpec::VaeBbc { bbc, .. } => bbc,
        _ => return,
    };
    bbc.tune = true;
    bbc.full_grid = true;
}

fn print_rows(report: &backorder::pipeline::ExperimentReport) {
    for row in &report.rows {
        match (&row.metrics, &row.error) {
            (Some(m), _) => println!(
                "{:<14} {:<13} roc_auc {:.4}  pr_auc {:.4}  macro_f1 {:.4}  recall {:.4}  mcc {:+.4}  brier {:.4}",
                row.model, row.transform, m.roc_auc, m.pr_auc, m.macro_f1, m.recall, m.mcc, m.brier
            ),
            (None, Some(e)) => println!("{:<14} {:<13} FAILED: {e}", row.model, row.transform),
            (None, None) => println!("{:<14} {:<13} (no metrics)", row.model, row.transform),
        }
    }
}
