use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use oml_core::experiment::{append_results_csv, result_records, DataFormat, TripletSource};
use oml_core::triplets::{write_triplet_dump, CategoryStats};
use oml_core::{
    kfold_cv, read_model, score, triplet_stats, write_model, Error, ExperimentConfig,
    FullRankMetric, MeasureKind, Method, Metric, ModelFile,
};

#[derive(Parser)]
#[command(
    name = "oml",
    version,
    about = "Robust online metric learning experiments"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate one or more algorithms over one or more noise levels.
    Experiment(ExperimentArgs),
    /// Generate triplets on a noise-injected dataset and count noisy ones.
    TripletStats(StatsArgs),
    /// Fit a model on a whole dataset and save it.
    Train(TrainArgs),
    /// Score a saved model on a held-out file.
    Evaluate(EvaluateArgs),
}

/// Flags shared by every command that builds a pipeline. Anything given here
/// overrides the `--config` file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<DataFormat>,
    #[arg(long)]
    label_column: Option<String>,
    /// Comma-separated for `experiment`.
    #[arg(long, value_delimiter = ',')]
    algorithm: Vec<Method>,
    #[arg(long = "C", allow_negative_numbers = true)]
    c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long)]
    max_hq_iter: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long)]
    grad_steps: Option<usize>,
    #[arg(long)]
    c_per_class: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    margin: Option<f64>,
    #[arg(long)]
    triplet_source: Option<TripletSource>,
    #[arg(long)]
    batch_k: Option<usize>,
    /// Label-noise level in [0, 1]; comma-separated for `experiment`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    nl: Vec<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    removal_fraction: Option<f64>,
    /// Reduce to this many principal components before learning.
    #[arg(long)]
    pca: Option<usize>,
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    positive_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "oml-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write triplet_stats.json and triplets.tsv here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "oml-out")]
    out_dir: PathBuf,
    /// Model path; defaults to <out-dir>/model.bin.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "csv")]
    format: DataFormat,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long)]
    positive_class: Option<usize>,
    /// Also write evaluation.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn base(&self) -> anyhow::Result<ExperimentConfig> {
        let Some(path) = &self.config else {
            return Ok(ExperimentConfig::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Error::config("config", e.to_string()).into())
    }

    /// Resolved configs, one per (algorithm, nl) pair.
    fn resolve(&self) -> anyhow::Result<Vec<ExperimentConfig>> {
        let mut cfg = self.base()?;
        macro_rules! set {
            ($($field:ident <- $flag:expr),* $(,)?) => {
                $(if let Some(v) = $flag.clone() { cfg.$field = v; })*
            };
        }
        set!(
            format <- self.format,
            label_column <- self.label_column,
            c <- self.c,
            eta <- self.eta,
            max_hq_iter <- self.max_hq_iter,
            lr <- self.lr,
            grad_steps <- self.grad_steps,
            c_per_class <- self.c_per_class,
            margin <- self.margin,
            triplet_source <- self.triplet_source,
            batch_k <- self.batch_k,
            folds <- self.folds,
            knn_k <- self.knn_k,
            seed <- self.seed,
        );
        if self.dataset.is_some() {
            cfg.dataset = self.dataset.clone();
        }
        if self.rank.is_some() {
            cfg.rank = self.rank;
        }
        if self.removal_fraction.is_some() {
            cfg.removal_fraction = self.removal_fraction;
        }
        if self.pca.is_some() {
            cfg.pca_dims = self.pca;
        }
        if self.positive_class.is_some() {
            cfg.positive_class = self.positive_class;
        }
        if self.no_normalize {
            cfg.normalize = false;
        }
        let algorithms = if self.algorithm.is_empty() {
            vec![cfg.algorithm]
        } else {
            self.algorithm.clone()
        };
        let levels = if self.nl.is_empty() {
            vec![cfg.nl]
        } else {
            self.nl.clone()
        };
        let mut out = Vec::new();
        for &algorithm in &algorithms {
            for &nl in &levels {
                let c = ExperimentConfig {
                    algorithm,
                    nl,
                    ..cfg.clone()
                };
                c.validate()?;
                out.push(c);
            }
        }
        Ok(out)
    }

    fn resolve_one(&self) -> anyhow::Result<ExperimentConfig> {
        let mut all = self.resolve()?;
        if all.len() != 1 {
            return Err(Error::config(
                "algorithm/nl",
                "this command takes a single algorithm and noise level",
            )
            .into());
        }
        Ok(all.remove(0))
    }
}

fn dataset_name(cfg: &ExperimentConfig) -> String {
    cfg.dataset
        .as_deref()
        .and_then(Path::file_stem)
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct RunRecord<'a> {
    dataset: String,
    seed: u64,
    config: &'a ExperimentConfig,
    cv: &'a oml_core::CvReport,
}

#[derive(Serialize)]
struct CurvePoint {
    algorithm: String,
    nl: f64,
    mean_accuracy: f64,
    std_accuracy: f64,
}

fn experiment(args: &ExperimentArgs) -> anyhow::Result<()> {
    let configs = args.config.resolve()?;
    let data = configs[0].load_dataset()?;
    std::fs::create_dir_all(&args.out_dir)?;
    let csv_path = args.out_dir.join("results.csv");
    if csv_path.exists() {
        std::fs::remove_file(&csv_path)?;
    }
    let name = dataset_name(&configs[0]);
    let mut runs = Vec::new();
    let mut curve = Vec::new();
    println!("{:<14} {:>5}  accuracy (%)", "algorithm", "nl");
    for cfg in &configs {
        log::info!("running {} at nl={}", cfg.algorithm, cfg.nl);
        let cv = kfold_cv(&data, cfg, cfg.seed)?;
        append_results_csv(&csv_path, &result_records(&name, cfg, cfg.seed, &cv))?;
        println!(
            "{:<14} {:>5.2}  {:.2}+-{:.2}",
            cfg.algorithm.name(),
            cfg.nl,
            cv.mean.accuracy * 100.0,
            cv.std.accuracy * 100.0
        );
        curve.push(CurvePoint {
            algorithm: cfg.algorithm.name().into(),
            nl: cfg.nl,
            mean_accuracy: cv.mean.accuracy,
            std_accuracy: cv.std.accuracy,
        });
        runs.push((cfg, cv));
    }
    let records: Vec<RunRecord> = runs
        .iter()
        .map(|(cfg, cv)| RunRecord {
            dataset: name.clone(),
            seed: cfg.seed,
            config: cfg,
            cv,
        })
        .collect();
    write_json(&args.out_dir.join("results.json"), &records)?;
    let mut w = csv::Writer::from_path(args.out_dir.join("accuracy_vs_nl.csv"))?;
    for p in &curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn stats(args: &StatsArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve_one()?;
    let data = cfg.load_dataset()?;
    let run = triplet_stats(&data, &cfg, cfg.seed)?;
    let s = &run.stats;
    let rows: [(&str, &CategoryStats); 6] = [
        ("all", &s.all),
        ("normal", &s.normal),
        ("noisy", &s.noisy),
        ("anchor_noisy", &s.anchor_noisy),
        ("positive_noisy", &s.positive_noisy),
        ("negative_noisy", &s.negative_noisy),
    ];
    println!("{:<15} {:>7}  mean hinge loss", "triplets", "count");
    for (label, c) in rows {
        let loss = c
            .mean_hinge_loss
            .map_or_else(|| "-".into(), |l| format!("{l:.4}"));
        println!("{label:<15} {:>7}  {loss}", c.count);
    }
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct Report<'a> {
            dataset: String,
            seed: u64,
            config: &'a ExperimentConfig,
            stats: &'a oml_core::TripletStats,
        }
        write_json(
            &dir.join("triplet_stats.json"),
            &Report {
                dataset: dataset_name(&cfg),
                seed: cfg.seed,
                config: &cfg,
                stats: s,
            },
        )?;
        // hinge losses are reported under the identity on the preprocessed space
        let dim = cfg.pca_dims.unwrap_or(data.dim());
        let identity: Metric = FullRankMetric::identity(dim, MeasureKind::Distance).into();
        write_triplet_dump(
            dir.join("triplets.tsv"),
            &run.records,
            &run.noisy_flags,
            &identity,
        )?;
    }
    Ok(())
}

fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve_one()?;
    let data = cfg.load_dataset()?;
    let fit = oml_core::fit_pipeline(&data, &cfg, cfg.seed)?;
    let path = match &args.model {
        Some(p) => p.clone(),
        None => {
            std::fs::create_dir_all(&args.out_dir)?;
            args.out_dir.join("model.bin")
        }
    };
    write_model(&path, &ModelFile::from_pipeline(&fit, &cfg, cfg.seed))?;
    let kept = fit.classifier.retained();
    println!(
        "trained {} on {} instances ({} triplets, {} kept for kNN); model written to {}",
        cfg.algorithm,
        data.len(),
        fit.triplet_count,
        kept,
        path.display()
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let model = read_model(&args.model)?;
    let Some(state) = &model.pipeline else {
        bail!(Error::Data(
            "model file carries no training pipeline".into()
        ));
    };
    let data = oml_core::experiment::load_dataset(&args.dataset, args.format, &args.label_column)?
        .align_classes(&state.class_names)?;
    let (pre, knn) = model.classifier()?;
    let positive = args
        .positive_class
        .or(state.config.positive_class)
        .unwrap_or(if state.class_names.len() == 2 { 1 } else { 0 });
    let (report, cm) = score(&pre, &knn, &data, positive)?;
    println!("instances    {}", data.len());
    for (name, v) in [
        ("accuracy", report.accuracy),
        ("sensitivity", report.sensitivity),
        ("precision", report.precision),
        ("specificity", report.specificity),
        ("f1", report.f1),
        ("g_mean", report.g_mean),
    ] {
        println!("{name:<12} {v:.4}");
    }
    if report.degenerate {
        println!("note: some ratios were 0/0 and are reported as 0");
    }
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct Report<'a> {
            model: &'a Path,
            dataset: &'a Path,
            positive_class: usize,
            report: oml_core::MetricReport,
            confusion: oml_core::ConfusionMatrix,
        }
        write_json(
            &dir.join("evaluation.json"),
            &Report {
                model: &args.model,
                dataset: &args.dataset,
                positive_class: positive,
                report,
                confusion: cm,
            },
        )?;
    }
    Ok(())
}

/// 2 bad configuration, 3 bad data, 4 numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config { .. }) => 2,
        Some(Error::Numeric(_)) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Experiment(a) => experiment(a),
        Command::TripletStats(a) => stats(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
