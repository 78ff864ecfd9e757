//! 8-bit PNG in, 8-bit PNG out. Values map to the internal `[0, 1]` scale on
//! load; saving clips to `[0, 1]` and quantizes round-half-up.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ronet_core::Tensor;

/// Load an 8-bit RGB or grayscale PNG as a `[1, c, h, w]` tensor.
pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .with_context(|| format!("decoding {}", path.display()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        bail!(
            "{}: expected 8-bit PNG, got {:?}",
            path.display(),
            info.bit_depth
        );
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1usize,
        png::ColorType::Rgb => 3usize,
        other => bail!(
            "{}: expected grayscale or RGB PNG, got {:?}",
            path.display(),
            other
        ),
    };
    let mut buf = vec![0u8; reader.output_buffer_size().context("image too large")?];
    let frame = reader
        .next_frame(&mut buf)
        .with_context(|| format!("reading {}", path.display()))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let bytes = &buf[..frame.buffer_size()];

    // Interleaved bytes to planar channels.
    let mut data = vec![0.0f32; channels * h * w];
    for (i, px) in bytes.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * h * w + i] = v as f32 / 255.0;
        }
    }
    Ok(Tensor::new(vec![1, channels, h, w], data)?)
}

/// Round-half-up quantization of one internal-scale value.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Save a `[1, c, h, w]` tensor (c = 1 or 3) as an 8-bit PNG.
pub fn save_image(tensor: &Tensor<f32>, path: &Path) -> Result<()> {
    let (n, c, h, w) = tensor.dims4()?;
    if n != 1 {
        bail!("can only save single images, got batch of {n}");
    }
    let color = match c {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        other => bail!("can only save 1- or 3-channel images, got {other}"),
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .with_context(|| format!("writing {}", path.display()))?;

    let mut bytes = vec![0u8; c * h * w];
    for ch in 0..c {
        let plane = tensor.plane(0, ch)?;
        for (i, &v) in plane.iter().enumerate() {
            bytes[i * c + ch] = quantize(v);
        }
    }
    writer
        .write_image_data(&bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
