//! Training subcommands: the decomposition network from clean images, the
//! reconstruction network from paired directories.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ronet_core::rodec::{self, RodecTrainOptions};
use ronet_core::rorec::{self, RorecTrainOptions};
use ronet_core::train::LossRow;

use crate::checkpoint;
use crate::config::{RunConfig, TrainKind};
use crate::dataset::{load_dir, PairedPatchSampler, PatchSampler};
use crate::manifest::Manifest;

#[derive(Debug, Args)]
pub struct TrainRodecArgs {
    /// Flat key = value run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory of training PNG images.
    #[arg(long)]
    pub images: PathBuf,
    /// Output directory for the checkpoint, loss CSV and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

/// Conventional decomposition-model label: U/S for the training mode, G/C
/// for grayscale or color.
fn model_variant(cfg: &RunConfig) -> String {
    let mode = match cfg.dec_mode {
        ronet_core::rodec::RodecTrainMode::Unsupervised => 'U',
        ronet_core::rodec::RodecTrainMode::Supervised => 'S',
    };
    let color = if cfg.task.image_channels() == 1 { 'G' } else { 'C' };
    format!("{mode}ROD-{color}")
}

/// Append-only CSV logger for training progress.
struct CsvLog {
    file: std::fs::File,
}

impl CsvLog {
    fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "{}", LossRow::CSV_HEADER)?;
        Ok(Self { file })
    }

    fn append(&mut self, row: &LossRow) {
        let _ = writeln!(self.file, "{}", row.to_csv());
    }
}

pub fn run_rodec(args: &TrainRodecArgs) -> Result<()> {
    let cfg = RunConfig::parse_file(&args.config, TrainKind::Decomposition)?;
    let images = load_dir(&args.images)?;
    if let Some((_, img)) = images.first() {
        let channels = img.shape()[1];
        if channels != cfg.task.image_channels() {
            bail!(
                "task {} expects {}-channel images, dataset has {channels}",
                cfg.task.name(),
                cfg.task.image_channels()
            );
        }
    }
    let mut sampler = PatchSampler::new(images, cfg.patch_size, cfg.batch_size, cfg.seed)?;
    let skipped = sampler.skipped.clone();

    let dec_cfg = cfg.rodec_config()?;
    let opts = RodecTrainOptions {
        updates: cfg.updates,
        schedule: cfg.schedule(),
        mode: cfg.dec_mode,
        init: cfg.init,
        init_seed: cfg.seed,
        svd_cache_capacity: cfg.svd_cache,
    };
    let mut log = CsvLog::create(&args.out.join("loss.csv"))?;
    let mut sink = |row: &LossRow| log.append(row);
    let weights = rodec::train::<f32>(&dec_cfg, &opts, &mut sampler, Some(&mut sink))?;

    let ckpt_path = args.out.join("rodec.ckpt");
    checkpoint::save(&weights, &ckpt_path)?;

    let mut manifest = Manifest::new("train-rodec");
    manifest.extend(cfg.echo());
    manifest.push("images", args.images.display().to_string());
    manifest.push("model_variant", model_variant(&cfg));
    manifest.push("weights_file", "rodec.ckpt");
    manifest.push("weights_sha256", checkpoint::content_hash(&weights));
    for warn in &skipped {
        manifest.push("skipped", warn.clone());
    }
    manifest.write(&args.out)?;
    println!(
        "trained decomposition for {} updates -> {}",
        cfg.updates,
        ckpt_path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainRonetArgs {
    /// Flat key = value run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory of degraded source PNGs.
    #[arg(long)]
    pub source: PathBuf,
    /// Directory of pristine target PNGs (paired by filename).
    #[arg(long)]
    pub target: PathBuf,
    /// Pre-trained decomposition checkpoint.
    #[arg(long)]
    pub dec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_ronet(args: &TrainRonetArgs) -> Result<()> {
    let cfg = RunConfig::parse_file(&args.config, TrainKind::Reconstruction)?;
    let dec_weights = checkpoint::load(&args.dec)?;
    let mut dec_cfg = rodec::infer_config(&dec_weights)?;
    if dec_cfg.levels < cfg.levels {
        bail!(
            "decomposition checkpoint has {} units, config asks for {}",
            dec_cfg.levels,
            cfg.levels
        );
    }
    dec_cfg.levels = cfg.levels;
    if dec_cfg.rop.out_channels != cfg.task.image_channels() {
        bail!(
            "decomposition checkpoint is {}-channel, task {} needs {}",
            dec_cfg.rop.out_channels,
            cfg.task.name(),
            cfg.task.image_channels()
        );
    }

    let sources = load_dir(&args.source)?;
    let targets = load_dir(&args.target)?;
    let mut pairs = Vec::new();
    for (name, src) in sources {
        let Some((_, tgt)) = targets.iter().find(|(t_name, _)| *t_name == name) else {
            bail!("source `{name}` has no target counterpart");
        };
        pairs.push((name, src, tgt.clone()));
    }
    let mut sampler =
        PairedPatchSampler::new(pairs, cfg.scale, cfg.patch_size, cfg.batch_size, cfg.seed)?;
    let skipped = sampler.skipped.clone();

    let rec_cfg = cfg.rorec_config();
    let opts = RorecTrainOptions {
        updates: cfg.updates,
        schedule: cfg.schedule(),
        hyper: cfg.hyper(),
        init: cfg.init,
        init_seed: cfg.seed,
        joint: cfg.joint,
    };
    let mut log = CsvLog::create(&args.out.join("loss.csv"))?;
    let mut sink = |row: &LossRow| log.append(row);
    let result = rorec::train::<f32>(
        &dec_cfg,
        &dec_weights,
        &rec_cfg,
        &opts,
        &mut sampler,
        Some(&mut sink),
    )?;

    let rec_path = args.out.join("ronet.ckpt");
    checkpoint::save(&result.rec, &rec_path)?;
    let mut manifest = Manifest::new("train-ronet");
    manifest.extend(cfg.echo());
    manifest.push("source", args.source.display().to_string());
    manifest.push("target", args.target.display().to_string());
    manifest.push("dec_checkpoint", args.dec.display().to_string());
    manifest.push("dec_sha256", checkpoint::content_hash(&dec_weights));
    manifest.push("weights_file", "ronet.ckpt");
    manifest.push("weights_sha256", checkpoint::content_hash(&result.rec));
    if cfg.joint {
        let joint_path = args.out.join("rodec-joint.ckpt");
        checkpoint::save(&result.dec, &joint_path)?;
        manifest.push("joint_dec_file", "rodec-joint.ckpt");
        manifest.push("joint_dec_sha256", checkpoint::content_hash(&result.dec));
    }
    for warn in &skipped {
        manifest.push("skipped", warn.clone());
    }
    manifest.write(&args.out)?;
    println!(
        "trained reconstruction for {} updates -> {}",
        cfg.updates,
        rec_path.display()
    );
    Ok(())
}
