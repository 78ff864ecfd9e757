//! Split an image into rank-one components plus residual and serialize each
//! part as a PNG with an affine-map sidecar.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ronet_core::rankone::{svd_decompose_tensor, Decomposition};
use ronet_core::rodec;
use ronet_core::Tensor;

use crate::checkpoint;
use crate::imageio::{load_image, save_image};
use crate::manifest::Manifest;

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Input PNG image.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for component PNGs and the sidecar.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of rank-one components.
    #[arg(long, visible_alias = "L", default_value_t = 3)]
    pub levels: usize,
    /// `svd` for the exact oracle, `learned` for trained weights.
    #[arg(long, default_value = "svd")]
    pub method: String,
    /// Decomposition checkpoint, required with `--method learned`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

pub const SIDECAR: &str = "components.txt";

fn affine_save(part: &Tensor<f32>, path: &Path) -> Result<(f32, f32)> {
    let lo = part.data().iter().copied().fold(f32::INFINITY, f32::min);
    let hi = part
        .data()
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    let range = (hi - lo).max(f32::MIN_POSITIVE);
    let mapped = part.map(|v| (v - lo) / range);
    save_image(&mapped, path)?;
    Ok((lo, hi))
}

pub fn run(args: &DecomposeArgs) -> Result<()> {
    let image = load_image(&args.input)?;
    let dec: Decomposition<f32> = match args.method.as_str() {
        "svd" => svd_decompose_tensor(&image, args.levels)?,
        "learned" => {
            let Some(weights_path) = &args.weights else {
                bail!("--method learned requires --weights");
            };
            let weights = checkpoint::load(weights_path)?;
            let cfg = rodec::infer_config(&weights)?;
            if cfg.levels < args.levels {
                bail!(
                    "checkpoint provides {} decomposition units, {} requested",
                    cfg.levels,
                    args.levels
                );
            }
            let mut cfg = cfg;
            cfg.levels = args.levels;
            rodec::forward_values(&weights, &cfg, &image)?
        }
        other => bail!("unknown method `{other}` (expected svd or learned)"),
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut sidecar = String::new();
    sidecar.push_str(&format!("input = {}\n", args.input.display()));
    sidecar.push_str(&format!("method = {}\n", args.method));
    sidecar.push_str(&format!("levels = {}\n", args.levels));
    for (i, comp) in dec.components.iter().enumerate() {
        let name = format!("component_{:02}.png", i + 1);
        let (lo, hi) = affine_save(comp, &args.out.join(&name))?;
        sidecar.push_str(&format!("part = {name} min = {lo} max = {hi}\n"));
    }
    let (lo, hi) = affine_save(&dec.residual, &args.out.join("residual.png"))?;
    sidecar.push_str(&format!("part = residual.png min = {lo} max = {hi}\n"));
    std::fs::write(args.out.join(SIDECAR), &sidecar)
        .with_context(|| format!("writing sidecar in {}", args.out.display()))?;

    let mut manifest = Manifest::new("decompose");
    manifest.push("input", args.input.display().to_string());
    manifest.push("method", args.method.clone());
    manifest.push("levels", args.levels.to_string());
    if let Some(w) = &args.weights {
        manifest.push("weights", w.display().to_string());
    }
    manifest.write(&args.out)?;
    println!(
        "decomposed {} into {} components + residual at {}",
        args.input.display(),
        dec.components.len(),
        args.out.display()
    );
    Ok(())
}

/// Rebuild the image from an emitted directory, plus the worst-case
/// quantization error bound documented by the sidecar.
pub fn reconstruct_from_dir(dir: &Path) -> Result<(Tensor<f32>, f64)> {
    let text = std::fs::read_to_string(dir.join(SIDECAR))
        .with_context(|| format!("reading sidecar in {}", dir.display()))?;
    let mut sum: Option<Tensor<f32>> = None;
    let mut bound = 0.0f64;
    for line in text.lines() {
        if !line.starts_with("part = ") {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        // part = <file> min = <lo> max = <hi>
        if fields.len() != 9 {
            bail!("malformed sidecar line `{line}`");
        }
        let file = fields[2];
        let lo: f32 = fields[5].parse().context("sidecar min")?;
        let hi: f32 = fields[8].parse().context("sidecar max")?;
        let range = (hi - lo).max(f32::MIN_POSITIVE);
        let mapped = load_image(&dir.join(file))?;
        let part = mapped.map(|v| lo + v * range);
        bound += range as f64 * 0.5 / 255.0;
        sum = Some(match sum {
            None => part,
            Some(acc) => {
                let data = acc
                    .data()
                    .iter()
                    .zip(part.data())
                    .map(|(&a, &b)| a + b)
                    .collect();
                Tensor::new(acc.shape().to_vec(), data)?
            }
        });
    }
    let Some(total) = sum else {
        bail!("sidecar lists no parts");
    };
    Ok((total, bound))
}
