use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pavesynth::augment::{augment_dataset, DatasetAugment};
use pavesynth::baseline::{predict_dataset, BaselineParams, PREDICTIONS_FILE};
use pavesynth::config::{ExperimentConfig, Preset};
use pavesynth::datasetio::{self, Manifest, HEADER_FILE, MANIFEST_FILE};
use pavesynth::lossfn::{bce, combined_loss, generalized_dice, LossWeights};
use pavesynth::scene::{generate_dataset, Condition};
use pavesynth::segmetrics::{self, DEFAULT_GRID_STEPS};
use pavesynth::Error;

#[derive(Parser, Debug)]
#[command(name = "pavesynth", version, about = "Synthetic pavement-crack datasets and segmentation evaluation")]
struct Cli {
    /// Log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset.
    Generate(GenerateArgs),
    /// Write augmented copies of a dataset.
    Augment(AugmentArgs),
    /// Reassign train/val splits.
    Split(SplitArgs),
    /// Build a manifest from external image and mask folders.
    Import(ImportArgs),
    /// Run the classical segmenter over a dataset.
    Baseline(BaselineArgs),
    /// Score probability maps against dataset masks.
    Evaluate(EvaluateArgs),
    /// Loss values for one prediction/mask pair.
    Loss(LossArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// noon, dusk, night, noon_rain, fog or cloudy.
    #[arg(long)]
    condition: Option<String>,
    /// synthetic_v1 or synthetic_v2; overrides the file's preset.
    #[arg(long)]
    preset: Option<String>,
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Replace an existing dataset in --out.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Dataset directory or manifest.jsonl.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML experiment config; its [augment] table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    copies: usize,
    /// Random square crop size applied after augmentation.
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to rewriting the input manifest (needs --force).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ImportArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "external")]
    source: String,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Prediction directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = BaselineParams::default().window_px)]
    window: usize,
    #[arg(long, default_value_t = BaselineParams::default().k)]
    k: f64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_STEPS)]
    grid_steps: usize,
    /// Write the JSON report here and print a table to stdout instead.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct LossArgs {
    /// 16-bit (or 8-bit) grayscale probability PNG.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = LossWeights::default().eps)]
    eps: f64,
    #[arg(long, default_value_t = LossWeights::default().dice)]
    dice_weight: f64,
    #[arg(long, default_value_t = LossWeights::default().bce)]
    bce_weight: f64,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Lib(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn workers(n: Option<usize>) -> usize {
    n.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Refuses to write into a non-empty `dir` unless `force`; with `force`
/// removes the named outputs of a previous run.
fn prepare_out(dir: &Path, force: bool, owned: &[&str]) -> CliResult {
    let occupied = dir.is_dir()
        && fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .next()
            .is_some();
    if occupied {
        if !force {
            return Err(Failure::Usage(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        for name in owned {
            let p = dir.join(name);
            let res = if p.is_dir() {
                fs::remove_dir_all(&p)
            } else if p.exists() {
                fs::remove_file(&p)
            } else {
                Ok(())
            };
            res.map_err(|e| io_err(&p, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

const DATASET_OUTPUTS: &[&str] = &["images", "masks", MANIFEST_FILE, HEADER_FILE, "config.toml"];

fn load_config(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn generate(a: GenerateArgs) -> CliResult {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(p) = &a.preset {
        let preset: Preset = p.parse()?;
        if a.config.is_some() {
            warn!("--preset replaces the scene settings from --config");
        }
        cfg.preset = preset;
        cfg.scene = preset.scene();
    }
    if let Some(c) = &a.condition {
        let c: Condition = c.parse()?;
        cfg.scene.set_condition(c);
    }
    cfg.scene.seed = a.seed;
    cfg.scene.validate()?;
    prepare_out(&a.out, a.force, DATASET_OUTPUTS)?;
    let record = a.out.join("config.toml");
    fs::write(&record, cfg.to_toml()?).map_err(|e| io_err(&record, e))?;
    let m = generate_dataset(&cfg.scene, a.count, a.seed, &a.out, workers(a.workers))?;
    info!("wrote {} samples to {}", m.entries.len(), a.out.display());
    Ok(())
}

fn augment(a: AugmentArgs) -> CliResult {
    let cfg = load_config(a.config.as_deref())?;
    cfg.augment.validate()?;
    prepare_out(&a.out, a.force, DATASET_OUTPUTS)?;
    let opts = DatasetAugment {
        seed: a.seed,
        copies: a.copies,
        crop: a.crop,
        workers: workers(a.workers),
    };
    let m = augment_dataset(&a.manifest, &a.out, &cfg.augment, opts)?;
    info!("wrote {} augmented samples to {}", m.entries.len(), a.out.display());
    Ok(())
}

/// Rewrites relative entry paths so they still resolve from `new_root`.
fn rebase(manifest: &mut Manifest, old_root: &Path) -> CliResult {
    let old = fs::canonicalize(old_root).map_err(|e| io_err(old_root, e))?;
    for e in &mut manifest.entries {
        for p in [&mut e.image_path, &mut e.mask_path] {
            *p = datasetio::resolve(&old, p).to_string_lossy().into_owned();
        }
    }
    Ok(())
}

fn split(a: SplitArgs) -> CliResult {
    let (root, _) = datasetio::locate(&a.manifest);
    let input = datasetio::read_manifest(&a.manifest)?;
    let mut out = datasetio::split(&input, a.train_fraction, a.seed)?;
    let out_root = match &a.out {
        Some(dir) => {
            prepare_out(dir, a.force, &[MANIFEST_FILE, HEADER_FILE])?;
            rebase(&mut out, &root)?;
            dir.clone()
        }
        None if a.force => root,
        None => {
            return Err(Failure::Usage(
                "refusing to rewrite the input manifest; pass --out or --force".into(),
            ))
        }
    };
    datasetio::write_manifest(&out_root, &out)?;
    println!(
        "train {} / val {}",
        out.count(datasetio::Split::Train),
        out.count(datasetio::Split::Val)
    );
    Ok(())
}

fn import(a: ImportArgs) -> CliResult {
    let imp = datasetio::import_external(&a.images, &a.masks, &a.source)?;
    for p in &imp.orphan_images {
        warn!("image without mask: {}", p.display());
    }
    for p in &imp.orphan_masks {
        warn!("mask without image: {}", p.display());
    }
    prepare_out(&a.out, a.force, &[MANIFEST_FILE, HEADER_FILE])?;
    datasetio::write_manifest(&a.out, &imp.manifest)?;
    println!("imported {} pairs", imp.manifest.entries.len());
    Ok(())
}

fn baseline(a: BaselineArgs) -> CliResult {
    let params = BaselineParams {
        window_px: a.window,
        k: a.k,
    };
    let manifest = datasetio::read_manifest(&a.manifest)?;
    let mut owned: Vec<String> = manifest.entries.iter().map(|e| format!("{}.png", e.id)).collect();
    owned.push(PREDICTIONS_FILE.into());
    let owned: Vec<&str> = owned.iter().map(String::as_str).collect();
    prepare_out(&a.out, a.force, &owned)?;
    let records = predict_dataset(&a.manifest, &a.out, &params, workers(a.workers))?;
    info!("wrote {} predictions to {}", records.len(), a.out.display());
    Ok(())
}

fn json(v: &impl serde::Serialize) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Lib(Error::Data(e.to_string())))
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    if a.grid_steps == 0 {
        return Err(Failure::Usage("--grid-steps must be >= 1".into()));
    }
    let grid = segmetrics::default_grid::<f64>(a.grid_steps);
    let run = || segmetrics::evaluate(&a.pred_dir, &a.manifest, a.threshold, &grid);
    let report = match a.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let text = json(&report)?;
    match &a.report {
        Some(path) => {
            fs::write(path, text + "\n").map_err(|e| io_err(path, e))?;
            println!("{report}");
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn loss(a: LossArgs) -> CliResult {
    let pred = datasetio::read_prob_png(&a.pred)?;
    let mask = datasetio::read_mask(&a.mask)?;
    let weights = LossWeights {
        dice: a.dice_weight,
        bce: a.bce_weight,
        eps: a.eps,
    };
    let value = serde_json::json!({
        "bce": bce(&pred, &mask, a.eps)?.value,
        "generalized_dice": generalized_dice(&pred, &mask, a.eps)?.value,
        "combined": combined_loss(&pred, &mask, weights)?.value,
        "weights": weights,
    });
    println!("{}", json(&value)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Augment(a) => augment(a),
        Command::Split(a) => split(a),
        Command::Import(a) => import(a),
        Command::Baseline(a) => baseline(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Loss(a) => loss(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
