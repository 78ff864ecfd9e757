//! Score restored images against ground truth and emit a CSV report.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use ronet_core::metrics::{
    psnr, ro_component_psnr_curve, shifted_max_psnr, ssim, y_channel_psnr, MetricRecord,
    MetricReport, ShiftSearch,
};

use crate::dataset::load_dir;
use crate::manifest::Manifest;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of restored PNGs.
    #[arg(long)]
    pub restored: PathBuf,
    /// Directory of ground-truth PNGs (paired by filename).
    #[arg(long)]
    pub truth: PathBuf,
    /// Protocol: plain, y-channel, shifted, or ro-curve.
    #[arg(long, default_value = "plain")]
    pub protocol: String,
    /// Output directory for report.csv and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Border pixels ignored by the y-channel protocol.
    #[arg(long, default_value_t = 4)]
    pub border: usize,
    /// Center-crop size of the shifted protocol.
    #[arg(long, default_value_t = 60)]
    pub crop: usize,
    /// Maximum translation of the shifted protocol.
    #[arg(long, default_value_t = 40)]
    pub max_shift: usize,
    /// Search only axis-aligned shifts instead of the full grid.
    #[arg(long, default_value_t = false)]
    pub axis_only: bool,
    /// Component count of the ro-curve protocol.
    #[arg(long, default_value_t = 10)]
    pub components: usize,
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let restored = load_dir(&args.restored)?;
    let truth = load_dir(&args.truth)?;

    let mut report = MetricReport::new(match args.protocol.as_str() {
        "plain" => "plain-all-pixels".to_string(),
        "y-channel" => format!("y-channel-studio-swing-border{}", args.border),
        "shifted" => format!(
            "shifted-max crop{} shift{} {}",
            args.crop,
            args.max_shift,
            if args.axis_only { "axis" } else { "grid" }
        ),
        "ro-curve" => format!("ro-component-curve-{}", args.components),
        other => bail!("unknown protocol `{other}`"),
    });

    for (name, img) in &restored {
        let Some((_, gt)) = truth.iter().find(|(t, _)| t == name) else {
            bail!("restored `{name}` has no ground-truth counterpart");
        };
        match args.protocol.as_str() {
            "plain" => {
                report.push(MetricRecord {
                    image_id: name.clone(),
                    psnr: psnr(img, gt)?,
                    ssim: Some(ssim(img, gt)?),
                });
            }
            "y-channel" => {
                report.push(MetricRecord {
                    image_id: name.clone(),
                    psnr: y_channel_psnr(img, gt, args.border)?,
                    ssim: Some(ssim(img, gt)?),
                });
            }
            "shifted" => {
                let search = if args.axis_only {
                    ShiftSearch::AxisOnly
                } else {
                    ShiftSearch::FullGrid
                };
                let score = shifted_max_psnr(gt, img, args.crop, args.max_shift, search)?;
                report.push(MetricRecord {
                    image_id: name.clone(),
                    psnr: score.psnr,
                    ssim: Some(score.ssim),
                });
            }
            "ro-curve" => {
                let curve = ro_component_psnr_curve(gt, img, args.components)?;
                for (i, p) in curve.into_iter().enumerate() {
                    report.push(MetricRecord {
                        image_id: format!("{name}:component{}", i + 1),
                        psnr: p,
                        ssim: None,
                    });
                }
            }
            _ => unreachable!(),
        }
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path = args.out.join("report.csv");
    let mut csv = String::from("image_id,protocol,psnr,ssim\n");
    for record in &report.records {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            record.image_id,
            report.protocol,
            record.psnr.csv_field(),
            record
                .ssim
                .map(|s| format!("{s:.6}"))
                .unwrap_or_else(|| "-".to_string()),
        ));
    }
    csv.push_str(&format!(
        "mean,{},{},{}\n",
        report.protocol,
        report
            .mean_psnr()
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "identical".to_string()),
        report
            .mean_ssim()
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".to_string()),
    ));
    std::fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;

    let mut manifest = Manifest::new("evaluate");
    manifest.push("restored", args.restored.display().to_string());
    manifest.push("truth", args.truth.display().to_string());
    manifest.push("protocol", report.protocol.clone());
    manifest.push("images", report.records.len().to_string());
    manifest.push("identical_pairs", report.identical_count().to_string());
    manifest.write(&args.out)?;
    println!(
        "evaluated {} records under `{}` -> {}",
        report.records.len(),
        report.protocol,
        csv_path.display()
    );
    Ok(())
}
