//! Frame stack files: a directory of 8-bit PNG frames with `meta.json`, or a
//! raw little-endian `f32` stack with a JSON sidecar.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::stack::{FrameStack, Quantization};
use crate::error::{Error, Result};
use crate::model::MCParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Png,
    Mcraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub format: Format,
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub fps: f64,
    pub grid: GridSpec,
    pub params: MCParams,
    pub seed: u64,
    pub quantization: Quantization,
}

impl StackMeta {
    pub fn of(stack: &FrameStack, format: Format) -> Self {
        Self {
            format,
            width: stack.width(),
            height: stack.height(),
            n_frames: stack.n_frames,
            fps: stack.grid.fps,
            grid: stack.grid,
            params: stack.params,
            seed: stack.seed,
            quantization: stack.quantization(),
        }
    }
}

fn write_json(path: &Path, meta: &StackMeta) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(meta)?;
    body.push(b'\n');
    fs::write(path, body)?;
    Ok(())
}

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.png")
}

pub fn write_png_dir(stack: &FrameStack, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let q = stack.quantized();
    let n = stack.grid.n_pixels();
    for t in 0..stack.n_frames {
        let file = File::create(dir.join(frame_file_name(t)))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), stack.width() as u32, stack.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        w.write_image_data(&q[t * n..(t + 1) * n])
            .map_err(|e| Error::Png(e.to_string()))?;
    }
    write_json(&dir.join("meta.json"), &StackMeta::of(stack, Format::Png))
}

pub fn read_png_dir(dir: &Path) -> Result<(StackMeta, Vec<u8>)> {
    let meta: StackMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    let mut out = Vec::with_capacity(meta.n_frames * meta.width * meta.height);
    for t in 0..meta.n_frames {
        let dec = png::Decoder::new(BufReader::new(File::open(dir.join(frame_file_name(t)))?));
        let mut reader = dec.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
        if info.width as usize != meta.width || info.height as usize != meta.height {
            return Err(Error::Png(format!("{} has unexpected dimensions", frame_file_name(t))));
        }
        out.extend_from_slice(&buf[..info.buffer_size()]);
    }
    Ok((meta, out))
}

/// Sidecar path for a raw stack: `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_raw(stack: &FrameStack, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    for v in stack.to_f32() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    write_json(&sidecar_path(path), &StackMeta::of(stack, Format::Mcraw))
}

pub fn read_raw(path: &Path) -> Result<(StackMeta, Vec<f32>)> {
    let meta: StackMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let expect = meta.n_frames * meta.width * meta.height * 4;
    if bytes.len() != expect {
        return Err(Error::Config(format!(
            "raw stack has {} bytes, sidecar implies {expect}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((meta, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_ar;

    fn stack() -> FrameStack {
        let p = MCParams::new([1.0, 0.0], 0.2, 0.3, 1.5, 0.5, 2.0).unwrap();
        let g = GridSpec::new(16, 8, 8.0, 100.0).with_delta(0.0025);
        synth_ar(&p, &g, 4, 3).unwrap()
    }

    #[test]
    fn png_and_raw_agree() {
        let dir = tempfile::tempdir().unwrap();
        let s = stack();
        write_png_dir(&s, &dir.path().join("png")).unwrap();
        write_raw(&s, &dir.path().join("x.mcraw")).unwrap();
        let (pm, pix) = read_png_dir(&dir.path().join("png")).unwrap();
        let (rm, raw) = read_raw(&dir.path().join("x.mcraw")).unwrap();
        assert_eq!(pm.format, Format::Png);
        assert_eq!(rm.quantization, pm.quantization);
        let q = rm.quantization;
        let requant: Vec<u8> = raw.iter().map(|v| q.apply(*v)).collect();
        assert_eq!(requant, pix);
        assert_eq!(pix.len(), 4 * 16 * 8);
    }

    #[test]
    fn truncated_raw_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.mcraw");
        write_raw(&stack(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_raw(&path).is_err());
    }
}
