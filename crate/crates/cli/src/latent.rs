//! Flat binary latent file ("FSQL"): a header followed by f32
//! little-endian frames, so quantization can be exercised without the
//! model.
//!
//! ```text
//! magic "FSQL" | version u8 = 1 | d u8
//! | frame_rate u32 numerator, u32 denominator
//! | u64 frame count | frame-major f32 LE values (frames x d)
//! ```

use fsqkit::Rate;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FSQL";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFile {
    pub dims: usize,
    pub frame_rate: Rate,
    /// Frame-major values, `frames.len() * dims` entries.
    pub values: Vec<f64>,
}

impl LatentFile {
    pub fn num_frames(&self) -> usize {
        self.values.len() / self.dims
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }
}

pub fn encode(file: &LatentFile) -> Vec<u8> {
    let frames = file.num_frames() as u64;
    let mut out = Vec::with_capacity(22 + file.values.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(file.dims as u8);
    out.extend_from_slice(&file.frame_rate.numerator().to_le_bytes());
    out.extend_from_slice(&file.frame_rate.denominator().to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());
    for &v in &file.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn parse(data: &[u8]) -> Result<LatentFile, LatentError> {
    let err = |offset: usize, reason: &str| LatentError::Parse {
        offset,
        reason: reason.into(),
    };
    if data.len() < 22 {
        return Err(err(data.len(), "truncated header"));
    }
    if data[0..4] != MAGIC {
        return Err(err(0, "bad magic"));
    }
    if data[4] != VERSION {
        return Err(err(4, "unsupported version"));
    }
    let dims = data[5] as usize;
    if dims == 0 {
        return Err(err(5, "zero dims"));
    }
    let num = u32::from_le_bytes(data[6..10].try_into().unwrap());
    let den = u32::from_le_bytes(data[10..14].try_into().unwrap());
    let frame_rate =
        Rate::new(num, den).map_err(|e| err(6, &format!("invalid frame rate: {e}")))?;
    let frames = u64::from_le_bytes(data[14..22].try_into().unwrap());
    let expected = frames
        .checked_mul(dims as u64)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| err(14, "frame count overflows"))? as usize;
    if data.len() != 22 + expected {
        return Err(err(
            data.len().min(22 + expected),
            "payload length does not match the header",
        ));
    }
    let mut values = Vec::with_capacity(frames as usize * dims);
    for chunk in data[22..].chunks_exact(4) {
        values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(LatentFile {
        dims,
        frame_rate,
        values,
    })
}

pub fn read(path: &std::path::Path) -> Result<LatentFile, LatentError> {
    parse(&std::fs::read(path)?)
}

pub fn write(path: &std::path::Path, file: &LatentFile) -> Result<(), LatentError> {
    std::fs::write(path, encode(file))?;
    Ok(())
}
