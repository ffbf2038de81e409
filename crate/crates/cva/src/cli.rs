//! Command-line surface tying the pipeline together.
//!
//! Subcommands: `costvol`, `disparity`, `train`, `infer`, `eval`, `synth`.
//! Every subcommand accepts `--config FILE` pointing at a flat
//! `key = value` text file; explicit flags override file values, which
//! override built-in defaults. Environment: `CVA_THREADS` caps internal
//! parallelism, `CVA_SEED` supplies the default seed when no `--seed`
//! flag or config key is present. Exit codes: 0 success, 1 usage,
//! 2 IO/format, 3 numerical.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{self, SummaryRow};
use crate::image::{ConfidenceMap, DisparityMap, GrayImage, GroundTruthMap};
use crate::matching::{build_cost_volume_bm, sgm_aggregate, wta_disparity};
use crate::net::{NetConfig, Network};
use crate::synth::{gen_stereo_pair, SceneSpec};
use crate::train::{build_training_set, train, TrainConfig};
use crate::volume::{default_bounds, CostVolume, MatcherKind};

#[derive(Parser)]
#[command(
    name = "cva",
    version,
    about = "Stereo confidence estimation: cost volumes, WTA disparity, \
             confidence network training/inference, and ROC evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a normalized cost volume and WTA disparity map from a stereo pair
    Costvol(CostvolArgs),
    /// Compute a WTA disparity map from an existing cost volume
    Disparity(DisparityArgs),
    /// Train the confidence network on volume/disparity/ground-truth triples
    Train(TrainArgs),
    /// Run the trained network over a full volume to produce a confidence map
    Infer(InferArgs),
    /// Evaluate confidence maps with ROC curves and AUC summaries
    Eval(EvalArgs),
    /// Generate synthetic stereo scenes with dense ground truth
    Synth(SynthArgs),
}

/// Entry point used by the `cva` binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let result = match cli.cmd {
        Cmd::Costvol(a) => cmd_costvol(&a),
        Cmd::Disparity(a) => cmd_disparity(&a),
        Cmd::Train(a) => cmd_train(&a),
        Cmd::Infer(a) => cmd_infer(&a),
        Cmd::Eval(a) => cmd_eval(&a),
        Cmd::Synth(a) => cmd_synth(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Applies `CVA_THREADS` to the global worker pool. Silently keeps the
/// existing pool if one was already built.
fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("CVA_THREADS") {
        let threads: usize = raw
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("CVA_THREADS must be a count: {raw:?}")))?;
        if threads == 0 {
            return Err(Error::InvalidArgument(
                "CVA_THREADS must be at least 1".into(),
            ));
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(())
}

/// Seed fallback from `CVA_SEED` when neither flag nor config supplies one.
fn env_seed() -> Result<Option<u64>> {
    match std::env::var("CVA_SEED") {
        Ok(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("CVA_SEED must be an integer: {raw:?}"))),
        Err(_) => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// Flat key = value configuration files.

/// Keys accepted in configuration files, across all subcommands.
const CONFIG_KEYS: &[&str] = &[
    "matcher",
    "window",
    "dmax",
    "dmin",
    "p1",
    "p2",
    "paths",
    "n",
    "depth",
    "channels",
    "head",
    "kernels",
    "batch",
    "epochs",
    "epochs1",
    "epochs2",
    "lr1",
    "lr2",
    "beta1",
    "beta2",
    "adam-eps",
    "dropout",
    "seed",
    "step",
    "tile",
    "width",
    "height",
    "texture",
    "noise",
    "textureless",
    "count",
];

/// A parsed `key = value` configuration file. Lookups are typed; flags
/// take precedence over file values via [`RunConfig::pick`].
#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses a flat `key = value` file. `#` starts a comment; blank
    /// lines are skipped; keys must come from the documented set.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        let mut offset = 0usize;
        for line in text.lines() {
            let line_offset = offset;
            offset += line.len() + 1;
            let stripped = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| {
                Error::format(path, line_offset as u64, format!("expected key = value, got {line:?}"))
            })?;
            let key = key.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::format(
                    path,
                    line_offset as u64,
                    format!("unknown config key {key:?}"),
                ));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(RunConfig { map })
    }

    /// Loads the file when a path is given, else returns an empty config.
    pub fn load_opt(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    /// Typed lookup; a present-but-unparsable value is a usage error.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::InvalidArgument(format!("config key {key}: bad value {raw:?}: {e}"))
            }),
        }
    }

    /// Flag > config file > default.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(flag.or(self.get(key)?).unwrap_or(default))
    }
}

/// Seed resolution: flag > config `seed` > `CVA_SEED` > 0.
fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    Ok(flag
        .or(cfg.get("seed")?)
        .or(env_seed()?)
        .unwrap_or(0))
}

/// Comma-separated positive integers, e.g. `8,16,32`.
fn parse_kernels(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad kernel list entry {tok:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// costvol

#[derive(Args)]
struct CostvolArgs {
    /// Left image (binary PGM, 8- or 16-bit)
    #[arg(long)]
    left: PathBuf,
    /// Right image (binary PGM, 8- or 16-bit)
    #[arg(long)]
    right: PathBuf,
    /// Matching cost: census-bm or census-sgm (default census-bm)
    #[arg(long)]
    matcher: Option<String>,
    /// Census window side, odd, at most 7 (default 5)
    #[arg(long)]
    window: Option<usize>,
    /// Maximum disparity; the volume holds dmax+1 levels (default 31)
    #[arg(long)]
    dmax: Option<usize>,
    /// SGM small penalty (default 2)
    #[arg(long)]
    p1: Option<f32>,
    /// SGM large penalty (default 96)
    #[arg(long)]
    p2: Option<f32>,
    /// SGM path count, 4 or 8 (default 8)
    #[arg(long)]
    paths: Option<usize>,
    /// Output cost-volume file
    #[arg(long)]
    out: PathBuf,
    /// Output WTA disparity map (default: out path with .pgm extension)
    #[arg(long)]
    disparity_out: Option<PathBuf>,
    /// Optional ground-truth PGM; prints the overall error when given
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Flat key = value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_costvol(a: &CostvolArgs) -> Result<()> {
    let cfg = RunConfig::load_opt(a.config.as_ref())?;
    let matcher: MatcherKind = cfg
        .pick(a.matcher.clone(), "matcher", "census-bm".to_string())?
        .parse()?;
    let window = cfg.pick(a.window, "window", 5)?;
    let dmax = cfg.pick(a.dmax, "dmax", 31)?;
    let p1 = cfg.pick(a.p1, "p1", 2.0)?;
    let p2 = cfg.pick(a.p2, "p2", 96.0)?;
    let paths = cfg.pick(a.paths, "paths", 8)?;

    let left = GrayImage::read_pgm(&a.left)?;
    let right = GrayImage::read_pgm(&a.right)?;
    let raw = build_cost_volume_bm(&left, &right, dmax, window)?;
    let volume = match matcher {
        MatcherKind::CensusBm => raw,
        MatcherKind::CensusSgm => sgm_aggregate(&raw, p1, p2, paths)?,
    };
    let disparity = wta_disparity(&volume);
    let volume = volume.normalize(&default_bounds(matcher, window, p2, paths)?)?;
    volume.write_file(&a.out)?;
    println!(
        "wrote {} ({}x{}x{})",
        a.out.display(),
        volume.width(),
        volume.height(),
        volume.depth()
    );

    let disp_out = a
        .disparity_out
        .clone()
        .unwrap_or_else(|| a.out.with_extension("pgm"));
    disparity.write_pgm(&disp_out)?;
    println!("wrote {}", disp_out.display());

    if let Some(gt_path) = &a.gt {
        let gt = GroundTruthMap::read_pgm(gt_path)?;
        println!("epsilon = {}", checked_overall_error(&disparity, &gt, gt_path)?);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// disparity

#[derive(Args)]
struct DisparityArgs {
    /// Input cost-volume file
    #[arg(long)]
    volume: PathBuf,
    /// Output 16-bit disparity PGM
    #[arg(long)]
    out: PathBuf,
    /// Optional ground-truth PGM; prints the overall error when given
    #[arg(long)]
    gt: Option<PathBuf>,
}

fn cmd_disparity(a: &DisparityArgs) -> Result<()> {
    let volume = CostVolume::read_file(&a.volume)?;
    let disparity = wta_disparity(&volume);
    disparity.write_pgm(&a.out)?;
    println!("wrote {}", a.out.display());
    if let Some(gt_path) = &a.gt {
        let gt = GroundTruthMap::read_pgm(gt_path)?;
        println!("epsilon = {}", checked_overall_error(&disparity, &gt, gt_path)?);
    }
    Ok(())
}

/// Overall error with the empty-ground-truth case reported as bad input
/// data (exit 2) rather than usage.
fn checked_overall_error(
    disp: &DisparityMap,
    gt: &GroundTruthMap,
    gt_path: &Path,
) -> Result<f64> {
    if gt.valid_count() == 0 {
        return Err(Error::InvalidState(format!(
            "{} has no valid ground-truth pixels",
            gt_path.display()
        )));
    }
    eval::overall_error(disp, gt)
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
struct TrainArgs {
    /// Manifest: one `volume disparity ground-truth` path triple per line,
    /// relative to the manifest's directory
    #[arg(long)]
    manifest: PathBuf,
    /// Output checkpoint; rewritten after every epoch
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss CSV (default: out path with .loss.csv extension)
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Patch side N, odd (default 13)
    #[arg(long)]
    n: Option<usize>,
    /// Disparity levels D; must match the volumes (default 256)
    #[arg(long)]
    depth: Option<usize>,
    /// Fusion-block channel width (default 32)
    #[arg(long)]
    channels: Option<usize>,
    /// Hidden width of the decision head (default 16)
    #[arg(long)]
    head: Option<usize>,
    /// Depth-convolution kernel sizes, comma-separated (default canonical)
    #[arg(long)]
    kernels: Option<String>,
    /// Batch size (default 256)
    #[arg(long)]
    batch: Option<usize>,
    /// Phase-1 epoch count (default 10)
    #[arg(long)]
    epochs1: Option<usize>,
    /// Phase-2 epoch count (default 3)
    #[arg(long)]
    epochs2: Option<usize>,
    /// Shorthand: run exactly this many epochs at the phase-1 rate
    #[arg(long, conflicts_with_all = ["epochs1", "epochs2"])]
    epochs: Option<usize>,
    /// Phase-1 learning rate (default 1e-4)
    #[arg(long)]
    lr1: Option<f64>,
    /// Phase-2 learning rate (default 1e-5)
    #[arg(long)]
    lr2: Option<f64>,
    /// Adam first-moment decay (default 0.9)
    #[arg(long)]
    beta1: Option<f64>,
    /// Adam second-moment decay (default 0.999)
    #[arg(long)]
    beta2: Option<f64>,
    /// Adam denominator offset (default 1e-8)
    #[arg(long)]
    adam_eps: Option<f64>,
    /// Dropout rate before the final layer (default 0.5)
    #[arg(long)]
    dropout: Option<f64>,
    /// Seed for shuffling, initialization, and dropout
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key = value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

/// One `volume disparity ground-truth` line of a training manifest.
struct ManifestEntry {
    volume: PathBuf,
    disparity: PathBuf,
    gt: PathBuf,
}

/// Parses a manifest of whitespace-separated path triples. Relative
/// paths resolve against the manifest's directory.
fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut offset = 0usize;
    for line in text.lines() {
        let line_offset = offset;
        offset += line.len() + 1;
        let stripped = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let fields: Vec<&str> = stripped.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                line_offset as u64,
                format!("expected 3 paths per line, got {}", fields.len()),
            ));
        }
        let resolve = |p: &str| {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        entries.push(ManifestEntry {
            volume: resolve(fields[0]),
            disparity: resolve(fields[1]),
            gt: resolve(fields[2]),
        });
    }
    if entries.is_empty() {
        return Err(Error::format(path, 0, "manifest lists no triples"));
    }
    Ok(entries)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::load_opt(a.config.as_ref())?;
    let canonical = NetConfig::canonical();
    let kernels = match a.kernels.clone().or(cfg.get("kernels")?) {
        Some(raw) => parse_kernels(&raw)?,
        None => canonical.depth_kernels.clone(),
    };
    let net_cfg = NetConfig {
        n: cfg.pick(a.n, "n", canonical.n)?,
        d: cfg.pick(a.depth, "depth", canonical.d)?,
        channels: cfg.pick(a.channels, "channels", canonical.channels)?,
        head: cfg.pick(a.head, "head", canonical.head)?,
        depth_kernels: kernels,
        dropout: cfg.pick(a.dropout, "dropout", canonical.dropout)?,
        ..canonical
    };
    net_cfg.validate()?;

    let defaults = TrainConfig::default();
    let (epochs1, epochs2) = match cfg.pick_opt_usize(a.epochs, "epochs")? {
        Some(total) => (total, 0),
        None => (
            cfg.pick(a.epochs1, "epochs1", defaults.phase1_epochs)?,
            cfg.pick(a.epochs2, "epochs2", defaults.phase2_epochs)?,
        ),
    };
    let train_cfg = TrainConfig {
        batch_size: cfg.pick(a.batch, "batch", defaults.batch_size)?,
        phase1_epochs: epochs1,
        phase1_lr: cfg.pick(a.lr1, "lr1", defaults.phase1_lr)?,
        phase2_epochs: epochs2,
        phase2_lr: cfg.pick(a.lr2, "lr2", defaults.phase2_lr)?,
        beta1: cfg.pick(a.beta1, "beta1", defaults.beta1)?,
        beta2: cfg.pick(a.beta2, "beta2", defaults.beta2)?,
        adam_eps: cfg.pick(a.adam_eps, "adam-eps", defaults.adam_eps)?,
        seed: resolve_seed(a.seed, &cfg)?,
    };
    train_cfg.validate()?;

    println!("config:");
    println!("  batch = {}", train_cfg.batch_size);
    println!("  epochs = {}+{}", train_cfg.phase1_epochs, train_cfg.phase2_epochs);
    println!("  lr1 = {}", train_cfg.phase1_lr);
    println!("  lr2 = {}", train_cfg.phase2_lr);
    println!("  beta1 = {}", train_cfg.beta1);
    println!("  beta2 = {}", train_cfg.beta2);
    println!("  adam-eps = {}", train_cfg.adam_eps);
    println!("  dropout = {}", net_cfg.dropout);
    println!("  seed = {}", train_cfg.seed);
    println!(
        "  net: n = {}, depth = {}, channels = {}, head = {}, kernels = {}",
        net_cfg.n,
        net_cfg.d,
        net_cfg.channels,
        net_cfg.head,
        net_cfg
            .depth_kernels
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );

    let entries = read_manifest(&a.manifest)?;
    let mut volumes = Vec::with_capacity(entries.len());
    let mut disparities = Vec::with_capacity(entries.len());
    let mut gts = Vec::with_capacity(entries.len());
    for entry in &entries {
        volumes.push(CostVolume::read_file(&entry.volume)?);
        disparities.push(DisparityMap::read_pgm(&entry.disparity)?);
        gts.push(GroundTruthMap::read_pgm(&entry.gt)?);
    }
    for vol in &volumes {
        if vol.depth() != net_cfg.d {
            return Err(Error::Mismatch(format!(
                "volume depth {} does not match network depth {}",
                vol.depth(),
                net_cfg.d
            )));
        }
    }
    let samples = build_training_set(&volumes, &disparities, &gts, net_cfg.n)?;
    println!("training samples: {}", samples.len());

    let net = Network::<f32>::init(net_cfg, train_cfg.seed)?;
    let out = a.out.clone();
    let outcome = train(net, &volumes, &samples, &train_cfg, |epoch, net| {
        net.save(&out)?;
        println!("epoch {epoch} checkpoint written");
        Ok(())
    })?;
    outcome.net.save(&a.out)?;
    println!("wrote {}", a.out.display());

    let log_path = a
        .loss_log
        .clone()
        .unwrap_or_else(|| a.out.with_extension("loss.csv"));
    crate::train::write_loss_log_csv(&outcome.log, &log_path)?;
    println!("wrote {}", log_path.display());
    if let Some(last) = outcome.log.last() {
        println!("final loss = {}", last.loss);
    }
    Ok(())
}

impl RunConfig {
    /// `pick` variant with no default: flag > config > None.
    fn pick_opt_usize(&self, flag: Option<usize>, key: &str) -> Result<Option<usize>> {
        Ok(flag.or(self.get(key)?))
    }
}

// ---------------------------------------------------------------------------
// infer

#[derive(Args)]
struct InferArgs {
    /// Trained network checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input cost-volume file (must be normalized)
    #[arg(long)]
    volume: PathBuf,
    /// Output base path: writes <out>.pgm and <out>.f32
    #[arg(long)]
    out: PathBuf,
    /// Process the volume in column tiles of this width
    #[arg(long)]
    tile: Option<usize>,
    /// Flat key = value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    let cfg = RunConfig::load_opt(a.config.as_ref())?;
    let net = Network::<f32>::load(&a.checkpoint)?;
    let volume = CostVolume::read_file(&a.volume)?;
    if volume.depth() != net.config().d {
        return Err(Error::Mismatch(format!(
            "volume depth {} does not match checkpoint depth {}",
            volume.depth(),
            net.config().d
        )));
    }
    let conf = match cfg.pick_opt_usize(a.tile, "tile")? {
        Some(tile) => net.infer_tiled(&volume, tile)?,
        None => net.infer_full(&volume)?,
    };

    let base = if a.out.extension().is_some_and(|e| e == "pgm") {
        a.out.with_extension("")
    } else {
        a.out.clone()
    };
    let pgm_path = base.with_extension("pgm");
    let raw_path = base.with_extension("f32");
    conf.write_pgm(&pgm_path)?;
    write_raw_f32(&raw_path, conf.values())?;
    println!(
        "wrote {} and {} ({}x{})",
        pgm_path.display(),
        raw_path.display(),
        conf.width(),
        conf.height()
    );
    Ok(())
}

/// Raw sidecar: row-major little-endian 32-bit floats, no header. The
/// paired PGM carries the dimensions.
fn write_raw_f32(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a raw `.f32` sidecar with dimensions taken from its paired maps.
fn read_raw_f32(path: &Path, width: usize, height: usize) -> Result<ConfidenceMap> {
    let bytes = std::fs::read(path)?;
    let expected = width * height * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            bytes.len().min(expected) as u64,
            format!("expected {expected} bytes for {width}x{height}, found {}", bytes.len()),
        ));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ConfidenceMap::new(width, height, values)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
struct EvalArgs {
    /// Confidence map: .f32 sidecar or 16-bit PGM (repeatable)
    #[arg(long, required = true)]
    confidence: Vec<PathBuf>,
    /// Disparity map PGM, one per confidence map
    #[arg(long, required = true)]
    disparity: Vec<PathBuf>,
    /// Ground-truth PGM, one per confidence map
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// ROC curve CSV output; with several images, an index is appended
    #[arg(long)]
    curve_out: PathBuf,
    /// Summary CSV with per-image rows, the average, and the average x100
    #[arg(long)]
    summary_out: PathBuf,
    /// Retained-fraction step of the ROC sweep (default 0.05)
    #[arg(long)]
    step: Option<f64>,
    /// Use the non-interval legacy sampling for comparison
    #[arg(long)]
    legacy: bool,
    /// Flat key = value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = RunConfig::load_opt(a.config.as_ref())?;
    let step = cfg.pick(a.step, "step", 0.05)?;
    if a.confidence.len() != a.disparity.len() || a.confidence.len() != a.gt.len() {
        return Err(Error::InvalidArgument(format!(
            "got {} confidence, {} disparity, {} ground-truth paths",
            a.confidence.len(),
            a.disparity.len(),
            a.gt.len()
        )));
    }

    let mut rows = Vec::new();
    for (i, ((conf_path, disp_path), gt_path)) in
        a.confidence.iter().zip(&a.disparity).zip(&a.gt).enumerate()
    {
        let disp = DisparityMap::read_pgm(disp_path)?;
        let gt = GroundTruthMap::read_pgm(gt_path)?;
        let conf = if conf_path.extension().is_some_and(|e| e == "f32") {
            read_raw_f32(conf_path, disp.width(), disp.height())?
        } else {
            ConfidenceMap::read_pgm(conf_path)?
        };
        let epsilon = checked_overall_error(&disp, &gt, gt_path)?;
        let curve = if a.legacy {
            eval::roc_curve_legacy(&conf, &disp, &gt, step)?
        } else {
            eval::roc_curve(&conf, &disp, &gt, step)?
        };
        let curve_path = indexed_path(&a.curve_out, i, a.confidence.len());
        eval::write_curve_csv(&curve, true, &curve_path)?;
        println!("wrote {}", curve_path.display());

        let image = conf_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("image{i}"));
        let auc = eval::auc(&curve);
        let auc_opt = eval::auc_opt(epsilon)?;
        println!("{image}: epsilon = {epsilon}, auc = {auc}, auc_opt = {auc_opt}");
        rows.push(SummaryRow {
            image,
            epsilon,
            auc,
            auc_opt,
        });
    }
    eval::write_summary_csv(&rows, &a.summary_out)?;
    println!("wrote {}", a.summary_out.display());
    Ok(())
}

/// `curve.csv` stays `curve.csv` for a single image and becomes
/// `curve.0.csv`, `curve.1.csv`, … when several images are evaluated.
fn indexed_path(base: &Path, index: usize, total: usize) -> PathBuf {
    if total <= 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let ext = base
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    base.with_file_name(format!("{stem}.{index}{ext}"))
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out_dir: PathBuf,
    /// File-name prefix (default "scene")
    #[arg(long)]
    prefix: Option<String>,
    /// Number of scenes; each scene uses seed + index (default 1)
    #[arg(long)]
    count: Option<usize>,
    /// Image width (default 64)
    #[arg(long)]
    width: Option<usize>,
    /// Image height (default 48)
    #[arg(long)]
    height: Option<usize>,
    /// Background-plane disparity (default 2)
    #[arg(long)]
    dmin: Option<usize>,
    /// Largest foreground disparity (default 10)
    #[arg(long)]
    dmax: Option<usize>,
    /// Texture density in [0,1] (default 0.9)
    #[arg(long)]
    texture: Option<f32>,
    /// Gaussian intensity-noise standard deviation (default 0.02)
    #[arg(long)]
    noise: Option<f32>,
    /// Texture-less area fraction in [0,1] (default 0.2)
    #[arg(long)]
    textureless: Option<f32>,
    /// Base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key = value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = RunConfig::load_opt(a.config.as_ref())?;
    let defaults = SceneSpec::default();
    let base = SceneSpec {
        width: cfg.pick(a.width, "width", defaults.width)?,
        height: cfg.pick(a.height, "height", defaults.height)?,
        d_min: cfg.pick(a.dmin, "dmin", defaults.d_min)?,
        d_max: cfg.pick(a.dmax, "dmax", defaults.d_max)?,
        texture_density: cfg.pick(a.texture, "texture", defaults.texture_density)?,
        noise_sigma: cfg.pick(a.noise, "noise", defaults.noise_sigma)?,
        textureless_fraction: cfg.pick(a.textureless, "textureless", defaults.textureless_fraction)?,
        seed: resolve_seed(a.seed, &cfg)?,
    };
    let count = cfg.pick(a.count, "count", 1)?;
    let prefix = a
        .prefix
        .clone()
        .unwrap_or_else(|| "scene".to_string());

    std::fs::create_dir_all(&a.out_dir)?;
    for i in 0..count {
        let spec = SceneSpec {
            seed: base.seed + i as u64,
            ..base.clone()
        };
        let scene = gen_stereo_pair(&spec)?;
        let name = if count == 1 {
            prefix.clone()
        } else {
            format!("{prefix}{i}")
        };
        let left = a.out_dir.join(format!("{name}_left.pgm"));
        let right = a.out_dir.join(format!("{name}_right.pgm"));
        let gt = a.out_dir.join(format!("{name}_gt.pgm"));
        scene.left.write_pgm(&left)?;
        scene.right.write_pgm(&right)?;
        scene.ground_truth.write_pgm(&gt)?;
        println!(
            "wrote {} {} {}",
            left.display(),
            right.display(),
            gt.display()
        );
    }
    Ok(())
}
