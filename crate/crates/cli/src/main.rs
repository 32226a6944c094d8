use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ppml_audit::dataset::{
    imbalance_linear, imbalance_normal, load_idx, load_image_dir, preprocess, read_container,
    reduce_class_count, reduce_class_size, synth_generate, to_grayscale, write_container, ImageDataset,
    PreprocessOptions, SplitKind, SynthSpec,
};
use ppml_audit::dp::{mode_for_budget, train, PrivacyBudget, TrainConfig, TrainMode, DEFAULT_DELTA};
use ppml_audit::experiment::{
    merge_reports, run_experiment, to_json_fixed, write_summary_csv, Architecture, AttackSummary,
    ExperimentConfig,
};
use ppml_audit::lira::{default_workers, round_robin_attack, train_shadows, write_scores_csv};
use ppml_audit::metrics::{utility, DatasetCharacteristics};
use ppml_audit::nn::{write_checkpoint, ModelConfig};

#[derive(Parser)]
#[command(name = "ppml-audit", version, about = "Privacy auditing for image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert IDX files, an image directory or synthetic data into a dataset file.
    Import(ImportArgs),
    /// Compute dataset characteristics as JSON.
    Analyze(AnalyzeArgs),
    /// Apply modification operators to a dataset file.
    Modify(ModifyArgs),
    /// Train one model and write its checkpoint.
    Train(TrainArgs),
    /// Train a shadow ensemble and run the round-robin attack.
    Attack(AttackArgs),
    /// Merge finished runs into one CSV table.
    Report(ReportArgs),
    /// Run a configured experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ImportArgs {
    /// Directory with MNIST-style IDX files.
    #[arg(long, group = "source")]
    idx: Option<PathBuf>,
    /// Directory tree of class-named image folders.
    #[arg(long, group = "source")]
    image_dir: Option<PathBuf>,
    /// Generate class-conditional synthetic images.
    #[arg(long, group = "source")]
    synth: bool,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    /// Side length of synthetic images.
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Write JSON here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Linear,
    Normal,
}

#[derive(Args)]
struct ModifyArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Convert to a single luminance channel.
    #[arg(long)]
    grayscale: bool,
    /// Keep the first N classes in alphanumeric order.
    #[arg(long)]
    class_count: Option<usize>,
    /// Randomly reduce every class to C training samples.
    #[arg(long)]
    class_size: Option<usize>,
    /// Imbalance factor in [0, 1].
    #[arg(long, requires = "mode")]
    imbalance: Option<f64>,
    #[arg(long, value_enum, requires = "imbalance")]
    mode: Option<Mode>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Channels of the three convolution stages.
    #[arg(long, default_value = "32,64,128", value_parser = parse_channels)]
    conv_channels: [usize; 3],
    #[arg(long, default_value_t = 8)]
    groups: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.005)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    clip_norm: f64,
    /// Privacy budget; "inf" trains without privacy.
    #[arg(long, default_value = "inf", value_parser = parse_epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Shrink images larger than 32x32 by area averaging.
    #[arg(long)]
    allow_downscale: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl ModelArgs {
    fn architecture(&self) -> Architecture {
        Architecture {
            conv_channels: self.conv_channels,
            groupnorm_groups: self.groups,
            hidden_units: self.hidden,
            ..Architecture::default()
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            ..TrainConfig::default()
        }
    }

    fn budget(&self) -> Result<PrivacyBudget> {
        if self.epsilon.is_infinite() {
            Ok(PrivacyBudget {
                delta: self.delta,
                ..PrivacyBudget::non_private()
            })
        } else {
            Ok(PrivacyBudget::new(self.epsilon, self.delta)?)
        }
    }

    fn options(&self) -> PreprocessOptions {
        PreprocessOptions {
            allow_downscale: self.allow_downscale,
        }
    }
}

fn parse_channels(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("'{p}' is not a channel count")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated channel counts".to_string())
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    match s {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => {
            let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number or 'inf'"))?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(format!("epsilon must be > 0, got {v}"))
            }
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Checkpoint path.
    #[arg(long, short)]
    output: PathBuf,
    /// Training history JSON path.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 32)]
    shadows: usize,
    /// Concurrent shadow trainings; defaults to the environment setting.
    #[arg(long)]
    workers: Option<usize>,
    /// Attack report JSON path; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Per-sample score CSV path.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a finished experiment; repeatable.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    /// CSV path; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<ImageDataset> {
    read_container(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn import(args: ImportArgs) -> Result<()> {
    let ds = if let Some(dir) = &args.idx {
        load_idx(dir)?
    } else if let Some(dir) = &args.image_dir {
        load_image_dir(dir)?
    } else if args.synth {
        let spec = SynthSpec {
            num_classes: args.classes,
            train_per_class: args.train_per_class,
            test_per_class: args.test_per_class,
            height: args.size,
            width: args.size,
            channels: args.channels,
            noise: args.noise,
            label_noise: args.label_noise,
            ..SynthSpec::default()
        };
        synth_generate(&spec, args.seed)?
    } else {
        bail!("choose one of --idx, --image-dir or --synth");
    };
    write_container(&ds, &args.output)?;
    let summary = serde_json::json!({
        "dims": ds.dims(),
        "classes": ds.class_names(),
        "train": ds.histogram(SplitKind::Train).counts,
        "test": ds.histogram(SplitKind::Test).counts,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let ds = load(&args.input)?;
    let ch = DatasetCharacteristics::compute(&ds)?;
    emit(&to_json_fixed(&ch), args.output.as_deref())
}

fn modify(args: ModifyArgs) -> Result<()> {
    let mut ds = load(&args.input)?;
    if args.grayscale {
        ds = to_grayscale(&ds)?;
    }
    if let Some(n) = args.class_count {
        ds = reduce_class_count(&ds, n)?;
    }
    if let Some(c) = args.class_size {
        ds = reduce_class_size(&ds, c, args.seed)?;
    }
    if let (Some(i), Some(mode)) = (args.imbalance, args.mode) {
        ds = match mode {
            Mode::Linear => imbalance_linear(&ds, i, args.seed)?,
            Mode::Normal => imbalance_normal(&ds, i, args.seed)?,
        };
    }
    write_container(&ds, &args.output)?;
    let summary = serde_json::json!({
        "classes": ds.class_names(),
        "train": ds.histogram(SplitKind::Train).counts,
        "test": ds.histogram(SplitKind::Test).counts,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn model_config(args: &ModelArgs, ds: &ImageDataset) -> Result<ModelConfig> {
    let cfg = args.architecture().model_config(ds.num_classes());
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let ds = load(&args.input)?;
    let m = &args.model;
    let cfg = model_config(m, &ds)?;
    let tr = preprocess(&ds, SplitKind::Train, m.options())?;
    let te = preprocess(&ds, SplitKind::Test, m.options())?;
    let train_config = m.train_config();
    let mode = mode_for_budget(&train_config, &m.budget()?, tr.len())?;
    let test = (!te.is_empty()).then_some(&te);
    let (params, history) = train(&tr, test, &cfg, &train_config, &mode, m.seed)?;
    let file = File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    write_checkpoint(&params, BufWriter::new(file))?;
    if let Some(h) = &args.history {
        emit(&to_json_fixed(&history), Some(h))?;
    }
    let sigma = match &mode {
        TrainMode::NonPrivate => 0.0,
        TrainMode::Private(dp) => dp.noise_multiplier,
    };
    let mut summary = serde_json::json!({ "noise_multiplier": sigma });
    if test.is_some() {
        summary["utility"] = serde_json::to_value(utility(&params, &tr, &te)?)?;
    }
    print!("{}", to_json_fixed(&summary));
    Ok(())
}

fn attack(args: AttackArgs) -> Result<()> {
    let ds = load(&args.input)?;
    let m = &args.model;
    let cfg = model_config(m, &ds)?;
    let tr = preprocess(&ds, SplitKind::Train, m.options())?;
    let workers = args.workers.unwrap_or_else(default_workers);
    let ensemble = train_shadows(&tr, &cfg, &m.train_config(), &m.budget()?, args.shadows, m.seed, workers)?;
    let report = round_robin_attack(&ensemble)?;
    let sigma = ensemble.histories.first().map_or(0.0, |h| h.noise_multiplier);
    let summary = AttackSummary::new(&report, tr.len() / 2, sigma);
    if let Some(path) = &args.scores {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_scores_csv(&report.scores, BufWriter::new(file))?;
    }
    emit(&to_json_fixed(&summary), args.output.as_deref())
}

fn report(args: ReportArgs) -> Result<()> {
    let dirs: Vec<&Path> = args.runs.iter().map(PathBuf::as_path).collect();
    let rows = merge_reports(&dirs)?;
    let mut buf = Vec::new();
    write_summary_csv(&rows, &mut buf)?;
    emit(std::str::from_utf8(&buf)?, args.output.as_deref())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    let manifest = run_experiment(&cfg)?;
    eprintln!("results written to {}", cfg.output_dir.display());
    if manifest.failed() {
        let failed: Vec<String> = manifest
            .stages
            .iter()
            .filter_map(|s| s.error.as_ref().map(|e| format!("{}: {e}", s.stage)))
            .collect();
        bail!("{} stage(s) failed:\n  {}", failed.len(), failed.join("\n  "));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Import(a) => import(a),
        Command::Analyze(a) => analyze(a),
        Command::Modify(a) => modify(a),
        Command::Train(a) => train_cmd(a),
        Command::Attack(a) => attack(a),
        Command::Report(a) => report(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
