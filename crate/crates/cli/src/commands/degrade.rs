//! Build paired `hr/` and `lr/` directories from clean images.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use ronet_core::degrade::{bicubic_downsample, DegradationKind, DegradationSpec};

use crate::dataset::list_pngs;
use crate::imageio::{load_image, save_image};
use crate::manifest::Manifest;

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Directory of clean PNG images.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; `hr/` and `lr/` are created inside.
    #[arg(long)]
    pub out: PathBuf,
    /// Degradation family: awgn, bicubic, or realistic.
    #[arg(long)]
    pub kind: String,
    /// Noise level on the 0-255 scale (awgn).
    #[arg(long, default_value_t = 25.0)]
    pub sigma: f64,
    /// Downsampling factor (bicubic, realistic).
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Master seed; per-image seeds derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn image_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (index as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z = (z ^ (z >> 32)).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z ^ (z >> 32)
}

pub fn run(args: &DegradeArgs) -> Result<()> {
    let paths = list_pngs(&args.input)?;
    let hr_dir = args.out.join("hr");
    let lr_dir = args.out.join("lr");
    let mut manifest = Manifest::new("degrade");
    manifest.push("input", args.input.display().to_string());
    manifest.push("kind", args.kind.clone());
    manifest.push("seed", args.seed.to_string());
    manifest.push("sigma", args.sigma.to_string());
    manifest.push("scale", args.scale.to_string());

    for (i, path) in paths.iter().enumerate() {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("{i}.png"));
        let clean = load_image(path)?;
        let seed = image_seed(args.seed, i);
        let (hr, lr, description) = match args.kind.as_str() {
            "awgn" => {
                let spec =
                    DegradationSpec::new(vec![DegradationKind::Awgn { sigma: args.sigma }], seed);
                let noisy = spec.apply(&clean)?;
                (clean, noisy, spec.describe())
            }
            "bicubic" => {
                // Crop first so the pair stays exactly aligned by the factor.
                let down = bicubic_downsample(&clean, args.scale)?;
                let hr = match down.cropped_from {
                    Some(_) => {
                        let (_, c, oh, ow) = down.image.dims4()?;
                        crop_to(&clean, c, oh * args.scale, ow * args.scale)?
                    }
                    None => clean,
                };
                let note = format!("seed={seed} | bicubic-down scale={}", args.scale);
                (hr, down.image, note)
            }
            "realistic" => {
                let spec = DegradationSpec::realistic(args.scale, seed);
                let down = bicubic_downsample(&clean, args.scale)?;
                let hr = match down.cropped_from {
                    Some(_) => {
                        let (_, c, oh, ow) = down.image.dims4()?;
                        crop_to(&clean, c, oh * args.scale, ow * args.scale)?
                    }
                    None => clean,
                };
                let lr = spec.apply(&hr)?;
                (hr, lr, spec.describe())
            }
            other => bail!("unknown degradation kind `{other}`"),
        };
        save_image(&hr, &hr_dir.join(&name))?;
        save_image(&lr, &lr_dir.join(&name))?;
        manifest.push(format!("image.{name}"), description);
    }
    manifest.write(&args.out)?;
    println!(
        "degraded {} images into {}",
        paths.len(),
        args.out.display()
    );
    Ok(())
}

fn crop_to(
    img: &ronet_core::Tensor<f32>,
    c: usize,
    h: usize,
    w: usize,
) -> Result<ronet_core::Tensor<f32>> {
    let (_, _, ih, iw) = img.dims4()?;
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let plane = img.plane(0, ch)?;
        for y in 0..h.min(ih) {
            data.extend_from_slice(&plane[y * iw..y * iw + w.min(iw)]);
        }
    }
    Ok(ronet_core::Tensor::new(vec![1, c, h, w], data)?)
}
