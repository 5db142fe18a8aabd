//! Minimal RIFF/WAVE reader and writer: PCM-16 and float-32, mono or
//! stereo. Stereo is downmixed to mono with a warning; nothing is ever
//! resampled implicitly.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    PcmI16,
    Float32,
}

#[derive(Debug, Clone)]
pub struct WavAudio {
    pub sample_rate: u32,
    /// Channel count of the source file; samples are already mono.
    pub source_channels: u16,
    pub samples: Vec<f64>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> WavError {
        WavError::Parse {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WavError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| self.err("truncated"))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, WavError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WavError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a WAV file into mono f64 samples in [-1, 1].
pub fn parse(data: &[u8]) -> Result<WavAudio, WavError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != b"RIFF" {
        return Err(WavError::Parse {
            offset: 0,
            reason: "missing RIFF magic".into(),
        });
    }
    let _riff_size = r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(WavError::Parse {
            offset: 8,
            reason: "missing WAVE tag".into(),
        });
    }

    let mut format: Option<(SampleFormat, u16, u32)> = None;
    let mut payload: Option<(usize, usize)> = None; // offset, len
    while r.pos + 8 <= data.len() {
        let id: [u8; 4] = r.take(4)?.try_into().unwrap();
        let size = r.u32()? as usize;
        let chunk_start = r.pos;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(r.err("fmt chunk too small"));
                }
                let audio_format = r.u16()?;
                let channels = r.u16()?;
                let sample_rate = r.u32()?;
                let _byte_rate = r.u32()?;
                let _block_align = r.u16()?;
                let bits = r.u16()?;
                let fmt = match (audio_format, bits) {
                    (1, 16) => SampleFormat::PcmI16,
                    (3, 32) => SampleFormat::Float32,
                    _ => {
                        return Err(WavError::Unsupported(format!(
                            "codec tag {audio_format} at {bits} bits (PCM-16 and float-32 only)"
                        )))
                    }
                };
                if channels == 0 || channels > 2 {
                    return Err(WavError::Unsupported(format!("{channels} channels")));
                }
                format = Some((fmt, channels, sample_rate));
            }
            b"data" => {
                payload = Some((chunk_start, size));
            }
            _ => {}
        }
        let advance = size + (size % 2); // chunks are word-aligned
        if chunk_start + advance > data.len() {
            // a truncated final data chunk is an error
            return Err(WavError::Parse {
                offset: data.len(),
                reason: format!(
                    "chunk {:?} claims {size} bytes but the file ends early",
                    String::from_utf8_lossy(&id)
                ),
            });
        }
        r.pos = chunk_start + advance;
    }
    let (fmt, channels, sample_rate) = format.ok_or(WavError::Parse {
        offset: data.len(),
        reason: "no fmt chunk".into(),
    })?;
    let (off, len) = payload.ok_or(WavError::Parse {
        offset: data.len(),
        reason: "no data chunk".into(),
    })?;
    let bytes_per = match fmt {
        SampleFormat::PcmI16 => 2,
        SampleFormat::Float32 => 4,
    } * channels as usize;
    if len % bytes_per != 0 {
        return Err(WavError::Parse {
            offset: off + len - len % bytes_per,
            reason: "data chunk is not a whole number of frames".into(),
        });
    }
    let frames = len / bytes_per;
    let mut samples = Vec::with_capacity(frames);
    let body = &data[off..off + len];
    for f in 0..frames {
        let mut acc = 0.0;
        for c in 0..channels as usize {
            let i = (f * channels as usize + c)
                * match fmt {
                    SampleFormat::PcmI16 => 2,
                    SampleFormat::Float32 => 4,
                };
            let v = match fmt {
                SampleFormat::PcmI16 => {
                    i16::from_le_bytes(body[i..i + 2].try_into().unwrap()) as f64 / 32768.0
                }
                SampleFormat::Float32 => {
                    f32::from_le_bytes(body[i..i + 4].try_into().unwrap()) as f64
                }
            };
            acc += v;
        }
        samples.push(acc / channels as f64);
    }
    if channels == 2 {
        eprintln!("warning: stereo input downmixed to mono");
    }
    Ok(WavAudio {
        sample_rate,
        source_channels: channels,
        samples,
    })
}

/// Serializes mono samples; PCM-16 writes saturate and report the clip
/// count.
pub fn encode(
    samples: &[f64],
    sample_rate: u32,
    format: SampleFormat,
) -> (Vec<u8>, usize) {
    let (bits, codec): (u16, u16) = match format {
        SampleFormat::PcmI16 => (16, 1),
        SampleFormat::Float32 => (32, 3),
    };
    let bytes_per = bits as usize / 8;
    let data_len = samples.len() * bytes_per;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&codec.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * bytes_per as u32).to_le_bytes());
    out.extend_from_slice(&(bytes_per as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    let mut clipped = 0usize;
    for &s in samples {
        match format {
            SampleFormat::PcmI16 => {
                let scaled = (s * 32768.0).round();
                if !(-32768.0..=32767.0).contains(&scaled) {
                    clipped += 1;
                }
                let v = scaled.clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&v.to_le_bytes());
            }
            SampleFormat::Float32 => {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
    }
    (out, clipped)
}

pub fn read(path: &std::path::Path) -> Result<WavAudio, WavError> {
    parse(&std::fs::read(path)?)
}

pub fn write(
    path: &std::path::Path,
    samples: &[f64],
    sample_rate: u32,
    format: SampleFormat,
) -> Result<usize, WavError> {
    let (bytes, clipped) = encode(samples, sample_rate, format);
    std::fs::write(path, bytes)?;
    Ok(clipped)
}
