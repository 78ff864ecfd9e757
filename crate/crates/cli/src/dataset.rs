//! Directory listing and deterministic patch sampling.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ronet_core::train::{BatchSource, PairSource};
use ronet_core::Tensor;

use crate::imageio::load_image;

/// Sorted PNG paths of a directory; the order every sampler relies on.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        bail!("no PNG files in {}", dir.display());
    }
    Ok(paths)
}

pub fn load_dir(dir: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    list_pngs(dir)?
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, load_image(&p)?))
        })
        .collect()
}

/// Uniform random patches from a set of images, deterministic under the seed.
/// Undersized images are skipped and reported in `skipped`.
pub struct PatchSampler {
    images: Vec<Tensor<f32>>,
    patch: usize,
    batch: usize,
    rng: ChaCha8Rng,
    pub skipped: Vec<String>,
}

impl PatchSampler {
    pub fn new(
        images: Vec<(String, Tensor<f32>)>,
        patch: usize,
        batch: usize,
        seed: u64,
    ) -> Result<Self> {
        if patch == 0 || batch == 0 {
            bail!("patch and batch sizes must be positive");
        }
        let mut kept = Vec::new();
        let mut skipped = Vec::new();
        let mut channels = None;
        for (name, img) in images {
            let (_, c, h, w) = img.dims4()?;
            if h < patch || w < patch {
                skipped.push(format!("{name}: {h}x{w} smaller than patch {patch}"));
                continue;
            }
            match channels {
                None => channels = Some(c),
                Some(expect) if expect != c => {
                    bail!("mixed channel counts in dataset: {expect} vs {c} ({name})")
                }
                _ => {}
            }
            kept.push(img);
        }
        if kept.is_empty() {
            bail!("dataset is empty: no image is at least {patch}x{patch}");
        }
        Ok(Self {
            images: kept,
            patch,
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
            skipped,
        })
    }

    fn sample_into(&mut self, out: &mut Vec<f32>) {
        let idx = self.rng.random_range(0..self.images.len());
        let img = &self.images[idx];
        let (_, c, h, w) = img.dims4().expect("validated rank 4");
        let y0 = self.rng.random_range(0..=h - self.patch);
        let x0 = self.rng.random_range(0..=w - self.patch);
        for ch in 0..c {
            let plane = img.plane(0, ch).expect("validated");
            for y in 0..self.patch {
                let row = (y0 + y) * w + x0;
                out.extend_from_slice(&plane[row..row + self.patch]);
            }
        }
    }

    pub fn channels(&self) -> usize {
        self.images[0].shape()[1]
    }
}

impl BatchSource<f32> for PatchSampler {
    fn next_batch(&mut self, _step: usize) -> ronet_core::Result<Tensor<f32>> {
        let c = self.channels();
        let mut data = Vec::with_capacity(self.batch * c * self.patch * self.patch);
        for _ in 0..self.batch {
            self.sample_into(&mut data);
        }
        Tensor::new(vec![self.batch, c, self.patch, self.patch], data)
    }
}

/// Aligned patch pairs from (source, target) image lists: the target corner
/// is the source corner scaled by the upsampling factor.
pub struct PairedPatchSampler {
    sources: Vec<Tensor<f32>>,
    targets: Vec<Tensor<f32>>,
    scale: usize,
    patch: usize,
    batch: usize,
    rng: ChaCha8Rng,
    pub skipped: Vec<String>,
}

impl PairedPatchSampler {
    pub fn new(
        pairs: Vec<(String, Tensor<f32>, Tensor<f32>)>,
        scale: usize,
        patch: usize,
        batch: usize,
        seed: u64,
    ) -> Result<Self> {
        if patch == 0 || batch == 0 || scale == 0 {
            bail!("patch, batch and scale must be positive");
        }
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        let mut skipped = Vec::new();
        for (name, src, tgt) in pairs {
            let (_, sc, sh, sw) = src.dims4()?;
            let (_, tc, th, tw) = tgt.dims4()?;
            if sc != tc {
                bail!("{name}: source has {sc} channels, target {tc}");
            }
            if th != sh * scale || tw != sw * scale {
                skipped.push(format!(
                    "{name}: target {th}x{tw} is not {scale}x the source {sh}x{sw}"
                ));
                continue;
            }
            if sh < patch || sw < patch {
                skipped.push(format!(
                    "{name}: source {sh}x{sw} smaller than patch {patch}"
                ));
                continue;
            }
            sources.push(src);
            targets.push(tgt);
        }
        if sources.is_empty() {
            bail!("paired dataset is empty after validation");
        }
        Ok(Self {
            sources,
            targets,
            scale,
            patch,
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
            skipped,
        })
    }

    fn crop(img: &Tensor<f32>, y0: usize, x0: usize, size: usize, out: &mut Vec<f32>) {
        let (_, c, _, w) = img.dims4().expect("validated rank 4");
        for ch in 0..c {
            let plane = img.plane(0, ch).expect("validated");
            for y in 0..size {
                let row = (y0 + y) * w + x0;
                out.extend_from_slice(&plane[row..row + size]);
            }
        }
    }
}

impl PairSource<f32> for PairedPatchSampler {
    fn next_pair(&mut self, _step: usize) -> ronet_core::Result<(Tensor<f32>, Tensor<f32>)> {
        let c = self.sources[0].shape()[1];
        let tp = self.patch * self.scale;
        let mut src_data = Vec::with_capacity(self.batch * c * self.patch * self.patch);
        let mut tgt_data = Vec::with_capacity(self.batch * c * tp * tp);
        for _ in 0..self.batch {
            let idx = self.rng.random_range(0..self.sources.len());
            let (_, _, sh, sw) = self.sources[idx].dims4()?;
            let y0 = self.rng.random_range(0..=sh - self.patch);
            let x0 = self.rng.random_range(0..=sw - self.patch);
            Self::crop(&self.sources[idx], y0, x0, self.patch, &mut src_data);
            Self::crop(
                &self.targets[idx],
                y0 * self.scale,
                x0 * self.scale,
                tp,
                &mut tgt_data,
            );
        }
        Ok((
            Tensor::new(vec![self.batch, c, self.patch, self.patch], src_data)?,
            Tensor::new(vec![self.batch, c, tp, tp], tgt_data)?,
        ))
    }
}
