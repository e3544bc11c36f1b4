//! On-disk formats: 8-bit PNG for images and labels, little-endian `f32`
//! raw buffers with a JSON sidecar for depth/flow, JSON for manifests.

use std::io::{BufReader, Cursor};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::write_atomic;
use crate::image::{Image, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Config(format!("png header: {e}")))?;
        w.write_image_data(data)
            .map_err(|e| Error::Config(format!("png data: {e}")))?;
    }
    Ok(out)
}

/// Save a 1- or 3-channel image in `[0,1]` as 8-bit PNG.
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let color = match img.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(Error::ShapeMismatch(format!(
                "cannot write {c}-channel PNG"
            )))
        }
    };
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    write_atomic(path, &encode_png(img.width(), img.height(), color, &bytes)?)
}

pub fn save_labels_png(path: &Path, labels: &LabelMap) -> Result<()> {
    let bytes: Vec<u8> = labels.data().iter().map(|&l| l.min(255) as u8).collect();
    write_atomic(
        path,
        &encode_png(
            labels.width(),
            labels.height(),
            png::ColorType::Grayscale,
            &bytes,
        )?,
    )
}

fn decode_png(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "only 8-bit PNG is supported"));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(Error::format(
                path,
                format!("unsupported color type {other:?}"),
            ))
        }
    };
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, channels, buf))
}

pub fn load_png(path: &Path) -> Result<Image> {
    let (w, h, c, buf) = decode_png(path)?;
    Image::from_vec(w, h, c, buf.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn load_labels_png(path: &Path) -> Result<LabelMap> {
    let (w, h, c, buf) = decode_png(path)?;
    if c != 1 {
        return Err(Error::format(path, "label maps must be grayscale"));
    }
    LabelMap::from_vec(w, h, buf.into_iter().map(u16::from).collect())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Write `img` as raw little-endian `f32` plus a `{width, height, channels}`
/// sidecar next to it.
pub fn save_raw(path: &Path, img: &Image) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * img.data().len());
    for &v in img.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_atomic(path, &bytes)?;
    let side = RawSidecar {
        width: img.width(),
        height: img.height(),
        channels: img.channels(),
    };
    save_json(&sidecar_path(path), &side)
}

pub fn load_raw(path: &Path) -> Result<Image> {
    let side: RawSidecar = load_json(&sidecar_path(path))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * side.width * side.height * side.channels {
        return Err(Error::format(path, "raw size does not match sidecar"));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Image::from_vec(side.width, side.height, side.channels, data)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}
