//! Restore a directory of degraded images with trained checkpoints. Both
//! network architectures are recovered from the checkpoints themselves.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use ronet_core::{rodec, rorec};

use crate::checkpoint;
use crate::dataset::list_pngs;
use crate::imageio::{load_image, save_image};
use crate::manifest::Manifest;

#[derive(Debug, Args)]
pub struct RestoreArgs {
    /// Directory of degraded source PNGs.
    #[arg(long)]
    pub source: PathBuf,
    /// Decomposition checkpoint.
    #[arg(long)]
    pub dec: PathBuf,
    /// Reconstruction checkpoint.
    #[arg(long)]
    pub rec: PathBuf,
    /// Output directory for restored PNGs.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &RestoreArgs) -> Result<()> {
    let dec_weights = checkpoint::load(&args.dec)?;
    let mut dec_cfg = rodec::infer_config(&dec_weights)?;
    let rec_weights = checkpoint::load(&args.rec)?;
    let rec_cfg = rorec::infer_config(&rec_weights)?;
    if dec_cfg.levels < rec_cfg.levels {
        bail!(
            "decomposition checkpoint has {} units, reconstruction expects {}",
            dec_cfg.levels,
            rec_cfg.levels
        );
    }
    dec_cfg.levels = rec_cfg.levels;

    let paths = list_pngs(&args.source)?;
    for path in &paths {
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned());
        let source = load_image(path)?;
        let restored = rorec::restore(&dec_weights, &dec_cfg, &rec_weights, &rec_cfg, &source)?;
        let out_path = args.out.join(name.unwrap_or_else(|| "out.png".into()));
        save_image(&restored, &out_path)?;
    }

    let mut manifest = Manifest::new("restore");
    manifest.push("source", args.source.display().to_string());
    manifest.push("dec_checkpoint", args.dec.display().to_string());
    manifest.push("rec_checkpoint", args.rec.display().to_string());
    manifest.push("dec_sha256", checkpoint::content_hash(&dec_weights));
    manifest.push("rec_sha256", checkpoint::content_hash(&rec_weights));
    manifest.push("levels", rec_cfg.levels.to_string());
    manifest.push("scale", rec_cfg.scale.to_string());
    manifest.push("images", paths.len().to_string());
    manifest.write(&args.out)?;
    println!(
        "restored {} images into {}",
        paths.len(),
        args.out.display()
    );
    Ok(())
}
