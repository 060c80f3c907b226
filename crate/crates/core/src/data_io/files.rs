//! `.vraw` video files and PGM/PPM frame export.
//!
//! `.vraw` layout: the line `VRAW1`, the line `T H W C f32 LE`, then
//! `T*H*W*C` little-endian `f32` samples, frame-major, row-major,
//! channel-last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{Video, VideoShape};

const MAGIC: &str = "VRAW1";

pub fn write_vraw<T: Real>(v: &Video<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = v.shape();
    let mut buf = Vec::with_capacity(32 + 4 * s.len());
    write!(
        buf,
        "{MAGIC}\n{} {} {} {} f32 LE\n",
        s.frames, s.height, s.width, s.channels
    )
    .expect("write to vec");
    for &x in v.data() {
        buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn take_line(bytes: &[u8], from: usize) -> Result<(&str, usize)> {
    let rest = &bytes[from.min(bytes.len())..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("header line not terminated".into()))?;
    let line = std::str::from_utf8(&rest[..end])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    Ok((line, from + end + 1))
}

pub fn read_vraw<T: Real>(path: impl AsRef<Path>) -> Result<Video<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (magic, pos) = take_line(&bytes, 0)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic '{magic}'")));
    }
    let (header, pos) = take_line(&bytes, pos)?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 6 || fields[4] != "f32" || fields[5] != "LE" {
        return Err(Error::Format(format!("bad header '{header}'")));
    }
    let mut dims = [0usize; 4];
    for (d, f) in dims.iter_mut().zip(&fields[..4]) {
        let v: i64 = f
            .parse()
            .map_err(|_| Error::Format(format!("bad dimension '{f}'")))?;
        if v < 0 {
            return Err(Error::Format(format!("negative dimension {v}")));
        }
        *d = usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large")))?;
    }
    let shape = VideoShape::new(dims[0], dims[1], dims[2], dims[3]);
    let expected = shape
        .checked_len()
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("dimensions {shape} overflow")))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    Video::new(shape, data)
}

/// Clamps to [0, 1] and maps to 0..=255 with round-half-up.
pub fn quantize_sample<T: Real>(v: T) -> u8 {
    let x = v.as_f64().clamp(0.0, 1.0);
    (x * 255.0 + 0.5).floor() as u8
}

/// Writes one binary PGM (`C = 1`) or PPM (`C = 3`) per frame into `dir`.
pub fn export_frames<T: Real>(v: &Video<T>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let (tag, ext) = match v.channels() {
        1 => ("P5", "pgm"),
        3 => ("P6", "ppm"),
        c => {
            return Err(Error::Unsupported(format!(
                "cannot export {c}-channel frames"
            )))
        }
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(v.frames());
    for t in 0..v.frames() {
        let path = dir.join(format!("frame_{t:04}.{ext}"));
        let mut buf = format!("{tag}\n{} {}\n255\n", v.width(), v.height()).into_bytes();
        buf.extend(v.frame(t).iter().map(|&x| quantize_sample(x)));
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
