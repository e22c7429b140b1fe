use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trak_core::config::ExperimentConfig;
use trak_core::datagen::{load_dataset, save_dataset, DatasetMetadata};
use trak_core::error::{Error, Result};
use trak_core::harness::{report_from_dir, run_experiment, run_on_dataset};
use trak_core::ingest::{binary_subset, pool_and_standardize, read_cifar_binary, ImageRecord, PIPELINE_NOTE};
use trak_core::model::{Dataset, ModelSpec};

#[derive(Parser)]
#[command(name = "trak", version, about = "Leave-one-out influence and its TRAK approximations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated estimators: true, linear, alo, trak, trak_simplified.
    #[arg(long)]
    estimators: Option<String>,
    /// Comma-separated projection dimensions.
    #[arg(long)]
    k: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic protocol over the configured n × p × trial grid.
    Simulate(Common),
    /// CIFAR binary batches to pooled, standardized CSV datasets.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Directory holding data_batch_1.bin … data_batch_5.bin and test_batch.bin.
        #[arg(long)]
        cifar_dir: PathBuf,
        /// Keep two classes, relabelled 0/1 (e.g. `0,1` for airplane/automobile).
        #[arg(long)]
        subset: Option<String>,
    },
    /// Estimators on one dataset given as `train`/`test` CSV files.
    Influence {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Correlations and rank alignments from influence tables in `--out`.
    Report(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(list) = &common.estimators {
        cfg.set("estimators", list)?;
    }
    if let Some(list) = &common.k {
        cfg.set("k", list)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_partition(dir: &std::path::Path, names: &[&str]) -> Result<Vec<ImageRecord>> {
    let mut records = Vec::new();
    for name in names {
        records.extend(read_cifar_binary(&dir.join(name))?);
    }
    Ok(records)
}

fn ingest(common: &Common, cifar_dir: &std::path::Path, subset: Option<&str>) -> Result<()> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("cifar"));
    let train_names =
        ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
    let mut train = read_partition(cifar_dir, &train_names)?;
    let mut test = read_partition(cifar_dir, &["test_batch.bin"])?;
    let (spec, offset, source) = match subset {
        Some(pair) => {
            let classes: Vec<u8> = pair
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad class {s:?}"))))
                .collect::<Result<_>>()?;
            let [a, b] = classes[..] else {
                return Err(Error::Config("--subset takes two classes".into()));
            };
            train = binary_subset(&train, a, b)?;
            test = binary_subset(&test, a, b)?;
            (ModelSpec::logistic(192), 0.0, format!("cifar10 classes {a},{b}"))
        }
        None => (ModelSpec::multiclass(10, 192)?, 1.0, "cifar10".to_string()),
    };
    let (xtr, ytr, stats) = pool_and_standardize(&train, None)?;
    let (xte, yte, _) = pool_and_standardize(&test, Some(stats))?;
    let labels = |y: &[u8]| nalgebra::DVector::from_iterator(y.len(), y.iter().map(|&l| l as f64 + offset));
    let train = Dataset::new(&spec, xtr, labels(&ytr))?;
    let test = Dataset::new(&spec, xte, labels(&yte))?;
    for (stem, data) in [("train", &train), ("test", &test)] {
        let meta = DatasetMetadata {
            n: data.n(),
            p: data.p(),
            model: spec.name(),
            source: source.clone(),
            seed: None,
            design: None,
            notes: vec![
                PIPELINE_NOTE.to_string(),
                format!("channel means {:?} stds {:?} (training partition)", stats.means, stats.stds),
            ],
        };
        save_dataset(data, &meta, &out, stem)?;
    }
    println!("wrote {} training and {} test rows to {}", train.n(), test.n(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            let report = run_experiment(&cfg)?;
            print!("{}", report.summary);
        }
        Command::Ingest { common, cifar_dir, subset } => ingest(&common, &cifar_dir, subset.as_deref())?,
        Command::Influence { common, train, test } => {
            let mut cfg = load_config(&common)?;
            if train.is_some() {
                cfg.train = train;
            }
            if test.is_some() {
                cfg.test = test;
            }
            let train_path = cfg.train.clone().ok_or_else(|| Error::Config("a training CSV is required".into()))?;
            let train_head = std::fs::read_to_string(&train_path)?;
            let p = train_head.lines().next().map_or(0, |h| h.split(',').count().saturating_sub(1));
            let spec = cfg.spec(p)?;
            let train = load_dataset(&spec, &train_path)?;
            let test = match &cfg.test {
                Some(path) => load_dataset(&spec, path)?,
                None => train.clone(),
            };
            let report = run_on_dataset(&cfg, &spec, &train, &test)?;
            print!("{}", report.summary);
        }
        Command::Report(common) => {
            let cfg = load_config(&common)?;
            print!("{}", report_from_dir(&cfg.out, &cfg.topk)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
