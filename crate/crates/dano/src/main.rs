use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dano::cli::{
    bench_csv, build_run_config, cmd_bench, cmd_eval, cmd_prep_data, cmd_rescue, cmd_train,
    cmd_verify, BenchOptions, DataSource, PrepOptions, RescueCliOptions, RunOverrides,
    VerifyOptions,
};
use dano::data::Split;
use dano::model::Mode;
use dano::train::LossKind;

#[derive(Parser)]
#[command(name = "dano", about = "Statevector training harness for VQC/DANO/ANO classifiers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a feature cache from raw dataset files
    PrepData(PrepArgs),
    /// Train a model and write metrics + checkpoints to a run directory
    Train(TrainArgs),
    /// Freeze a trained VQC checkpoint and train only a diagonal observable
    Rescue(RescueArgs),
    /// Evaluate a checkpoint on a dataset split
    Eval(EvalArgs),
    /// Run the numerical verification suites
    Verify(VerifyArgs),
    /// Time diagonal vs dense measurement over an (n, k) grid
    Bench(BenchArgs),
}

#[derive(Args)]
struct PrepArgs {
    /// Dataset kind: mnist or yaleb
    #[arg(long)]
    dataset: String,
    /// IDX image file (mnist)
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file (mnist)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of samples to take from the front of the file (mnist)
    #[arg(long, default_value_t = 10_000)]
    limit: usize,
    /// Directory of PGM captures (yaleb)
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value config file; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    windows: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// cross-entropy or mse
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    threads: Option<usize>,
    /// Feature cache produced by prep-data
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RescueArgs {
    /// Pure-VQC checkpoint at the switch epoch
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Locality of the fresh diagonal observable
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 30)]
    switch_epoch: usize,
    /// Total epoch count including the pre-switch part
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.03)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value = "cross-entropy")]
    loss: LossKind,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// train, val or test
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trial count for the randomized bound suites
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Test hook: corrupt one suite to prove the harness catches faults
    #[arg(long, hide = true, default_value_t = false)]
    inject_fault: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 12)]
    n: usize,
    /// Comma-separated localities
    #[arg(long, default_value = "2,4,6,8", value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write the table to this CSV file as well as stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run() -> dano::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::PrepData(args) => {
            let source = match args.dataset.as_str() {
                "mnist" => DataSource::Mnist {
                    images: args.images.ok_or_else(|| {
                        dano::Error::Validation("--images is required for mnist".into())
                    })?,
                    labels: args.labels.ok_or_else(|| {
                        dano::Error::Validation("--labels is required for mnist".into())
                    })?,
                    limit: args.limit,
                },
                "yaleb" => DataSource::YaleB {
                    dir: args.dir.ok_or_else(|| {
                        dano::Error::Validation("--dir is required for yaleb".into())
                    })?,
                },
                other => {
                    return Err(dano::Error::Validation(format!(
                        "unknown dataset '{other}' (expected mnist or yaleb)"
                    )))
                }
            };
            let summary = cmd_prep_data(&PrepOptions {
                source,
                out: args.out,
                seed: args.seed,
            })?;
            println!(
                "wrote {} ({} rows x {} features); metadata in {}",
                summary.cache.display(),
                summary.rows,
                summary.dim,
                summary.meta.display()
            );
        }
        Command::Train(args) => {
            let ov = RunOverrides {
                mode: args.mode,
                n: args.n,
                k: args.k,
                layers: args.layers,
                windows: args.windows,
                classes: args.classes,
                seed: args.seed,
                epochs: args.epochs,
                batch: args.batch,
                lr: args.lr,
                loss: args.loss,
                threads: args.threads,
                data: args.data,
                out: args.out,
            };
            let cfg = build_run_config(args.config.as_deref(), &ov)?;
            let counts = dano::model::count_params(&cfg.model_config()?);
            println!(
                "mode={} n={} k={} layers={}: {} circuit + {} observable = {} trainable parameters",
                cfg.mode.as_str(),
                cfg.n,
                cfg.k,
                cfg.layers,
                counts.circuit,
                counts.observable,
                counts.total,
            );
            let summary = cmd_train(&cfg)?;
            let last = summary.history.last().unwrap();
            println!(
                "run {} finished: train_loss {:.4}, test_acc {:.4}; best checkpoint {}",
                summary.run_dir.display(),
                last.train_loss,
                last.test_accuracy,
                summary.best_checkpoint.display()
            );
        }
        Command::Rescue(args) => {
            let summary = cmd_rescue(&RescueCliOptions {
                checkpoint: args.checkpoint,
                data: args.data,
                out: args.out,
                k: args.k,
                switch_epoch: args.switch_epoch,
                total_epochs: args.epochs,
                lr: args.lr,
                batch: args.batch,
                loss: args.loss,
                threads: args.threads,
            })?;
            let last = summary.history.last().unwrap();
            println!(
                "branch {}: frozen baseline {:.4} -> rescued test_acc {:.4} over {} epochs",
                summary.branch_dir.display(),
                summary.frozen_accuracy,
                last.test_accuracy,
                summary.history.len()
            );
        }
        Command::Eval(args) => {
            let split: Split = args.split.parse()?;
            let acc = cmd_eval(&args.checkpoint, &args.data, split)?;
            println!("{split:?} accuracy: {acc:.6}");
        }
        Command::Verify(args) => {
            let report = cmd_verify(&VerifyOptions {
                trials: args.trials,
                inject_fault: args.inject_fault,
            })?;
            print!("{}", report.to_csv());
            if !report.all_passed() {
                eprintln!("verification FAILED");
                return Ok(ExitCode::FAILURE);
            }
            println!("all suites passed");
        }
        Command::Bench(args) => {
            let rows = cmd_bench(&BenchOptions {
                n: args.n,
                ks: args.k,
                reps: args.reps,
                seed: args.seed,
                extra: vec![(16, 8)],
            })?;
            let csv = bench_csv(&rows);
            print!("{csv}");
            if let Some(path) = args.out {
                std::fs::write(&path, csv).map_err(|e| dano::Error::io(&path, e))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
