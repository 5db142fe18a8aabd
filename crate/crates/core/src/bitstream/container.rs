//! The FSQB token container.
//!
//! Byte-exact layout, all integers little-endian:
//!
//! ```text
//! magic "FSQB" | version u8 = 1 | mode u8 (0 raw, 1 huffman)
//! | d u8 | n_stages u8
//! | per stage: n_dims_levels u8, then that many u32 level counts
//! | frame_rate u32 numerator, u32 denominator
//! | u64 frame count
//! | huffman mode only, per stage: u32 symbol count, then u8 code
//!   lengths (one per codebook index, 0 = no code)
//! | payload bits MSB-first, zero-padded to the byte boundary
//! ```
//!
//! Raw payload packs each token with `ceil(log2(stage codebook))` bits;
//! huffman payload concatenates canonical codewords. Parsing enforces
//! the exact byte length implied by the header and zero padding bits,
//! and reports the byte offset of the first inconsistency.

use super::bits::{BitReader, BitWriter};
use super::huffman::{CodebookHistogram, HuffmanDecoder, HuffmanTable};
use super::{ceil_log2, BitstreamError};
use crate::rate::Rate;

pub const MAGIC: [u8; 4] = *b"FSQB";
pub const VERSION: u8 = 1;

/// Largest codebook for which a huffman-mode container may be written;
/// the format serializes one code length per codebook index.
pub const MAX_HUFFMAN_CODEBOOK: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PackMode {
    Raw,
    Huffman,
}

/// A sequence of per-frame token tuples (one token per residual stage)
/// plus the header metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream {
    frame_rate: Rate,
    dims: u8,
    /// Per-stage, per-dimension level counts; every stage has `dims`
    /// entries.
    stage_levels: Vec<Vec<u32>>,
    /// Frame-major payload, one token per stage.
    frames: Vec<Vec<u64>>,
}

impl TokenStream {
    pub fn new(
        frame_rate: Rate,
        stage_levels: Vec<Vec<u32>>,
        frames: Vec<Vec<u64>>,
    ) -> Result<Self, BitstreamError> {
        if stage_levels.is_empty() {
            return Err(BitstreamError::NoStages);
        }
        let dims = stage_levels[0].len();
        if dims == 0 || dims > u8::MAX as usize {
            return Err(BitstreamError::BadDims(dims));
        }
        if stage_levels.len() > u8::MAX as usize {
            return Err(BitstreamError::NoStages);
        }
        for levels in &stage_levels {
            if levels.len() != dims {
                return Err(BitstreamError::StageDimsMismatch {
                    expected: dims,
                    got: levels.len(),
                });
            }
            for &l in levels {
                if l < 2 {
                    return Err(BitstreamError::InvalidCodebook(l as u64));
                }
            }
        }
        let sizes = stage_codebooks(&stage_levels)?;
        for (f, frame) in frames.iter().enumerate() {
            if frame.len() != stage_levels.len() {
                return Err(BitstreamError::FrameShape {
                    frame: f,
                    expected: stage_levels.len(),
                    got: frame.len(),
                });
            }
            for (&token, &codebook) in frame.iter().zip(&sizes) {
                if token >= codebook {
                    return Err(BitstreamError::TokenOutOfRange { token, codebook });
                }
            }
        }
        Ok(TokenStream {
            frame_rate,
            dims: dims as u8,
            stage_levels,
            frames,
        })
    }

    pub fn frame_rate(&self) -> Rate {
        self.frame_rate
    }

    pub fn dims(&self) -> usize {
        self.dims as usize
    }

    pub fn stages(&self) -> usize {
        self.stage_levels.len()
    }

    pub fn stage_levels(&self) -> &[Vec<u32>] {
        &self.stage_levels
    }

    pub fn frames(&self) -> &[Vec<u64>] {
        &self.frames
    }

    pub fn stage_codebook_sizes(&self) -> Result<Vec<u64>, BitstreamError> {
        stage_codebooks(&self.stage_levels)
    }

    /// Histogram of one stage's tokens across all frames.
    pub fn stage_histogram(&self, stage: usize) -> Result<CodebookHistogram, BitstreamError> {
        let sizes = self.stage_codebook_sizes()?;
        let codebook = *sizes
            .get(stage)
            .ok_or(BitstreamError::NoSuchStage(stage))?;
        CodebookHistogram::from_tokens(codebook, self.frames.iter().map(|f| f[stage]))
    }
}

fn stage_codebooks(stage_levels: &[Vec<u32>]) -> Result<Vec<u64>, BitstreamError> {
    stage_levels
        .iter()
        .map(|levels| {
            levels
                .iter()
                .try_fold(1u64, |acc, &l| acc.checked_mul(l as u64))
                .ok_or(BitstreamError::CodebookOverflow)
        })
        .collect()
}

/// Serializes a token stream; in huffman mode the per-stage tables are
/// computed from the stream itself and stored in the header.
pub fn pack_stream(ts: &TokenStream, mode: PackMode) -> Result<Vec<u8>, BitstreamError> {
    let sizes = ts.stage_codebook_sizes()?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(match mode {
        PackMode::Raw => 0,
        PackMode::Huffman => 1,
    });
    out.push(ts.dims);
    out.push(ts.stages() as u8);
    for levels in ts.stage_levels() {
        out.push(levels.len() as u8);
        for &l in levels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    out.extend_from_slice(&ts.frame_rate.numerator().to_le_bytes());
    out.extend_from_slice(&ts.frame_rate.denominator().to_le_bytes());
    out.extend_from_slice(&(ts.frames().len() as u64).to_le_bytes());

    let mut writer = BitWriter::new();
    match mode {
        PackMode::Raw => {
            let widths: Vec<u32> = sizes.iter().map(|&k| ceil_log2(k)).collect();
            for frame in ts.frames() {
                for (&token, &width) in frame.iter().zip(&widths) {
                    writer.write_bits(token, width);
                }
            }
        }
        PackMode::Huffman => {
            let mut tables = Vec::with_capacity(ts.stages());
            for (stage, &codebook) in sizes.iter().enumerate() {
                if codebook > MAX_HUFFMAN_CODEBOOK {
                    return Err(BitstreamError::HuffmanCodebookTooLarge(codebook));
                }
                let table = if ts.frames().is_empty() {
                    None
                } else {
                    Some(HuffmanTable::build(&ts.stage_histogram(stage)?)?)
                };
                out.extend_from_slice(&(codebook as u32).to_le_bytes());
                let mut lengths = vec![0u8; codebook as usize];
                if let Some(table) = &table {
                    for &(symbol, len, _) in table.entries() {
                        lengths[symbol as usize] = len;
                    }
                }
                out.extend_from_slice(&lengths);
                tables.push(table);
            }
            for frame in ts.frames() {
                for (&token, table) in frame.iter().zip(&tables) {
                    let table = table.as_ref().expect("frames imply tables");
                    let (code, len) = table
                        .code_of(token)
                        .ok_or(BitstreamError::SymbolWithoutCode(token))?;
                    writer.write_bits(code, len as u32);
                }
            }
        }
    }
    out.extend_from_slice(&writer.into_bytes());
    Ok(out)
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn truncated(&self) -> BitstreamError {
        BitstreamError::Parse {
            offset: self.pos,
            reason: "unexpected end of data".into(),
        }
    }

    fn u8(&mut self) -> Result<u8, BitstreamError> {
        let b = *self.data.get(self.pos).ok_or_else(|| self.truncated())?;
        self.pos += 1;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, BitstreamError> {
        let end = self.pos.checked_add(4).ok_or_else(|| self.truncated())?;
        let bytes = self.data.get(self.pos..end).ok_or_else(|| self.truncated())?;
        self.pos = end;
        Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, BitstreamError> {
        let end = self.pos.checked_add(8).ok_or_else(|| self.truncated())?;
        let bytes = self.data.get(self.pos..end).ok_or_else(|| self.truncated())?;
        self.pos = end;
        Ok(u64::from_le_bytes(bytes.try_into().unwrap()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BitstreamError> {
        let end = self.pos.checked_add(n).ok_or_else(|| self.truncated())?;
        let bytes = self.data.get(self.pos..end).ok_or_else(|| self.truncated())?;
        self.pos = end;
        Ok(bytes)
    }

    fn error(&self, reason: impl Into<String>) -> BitstreamError {
        BitstreamError::Parse {
            offset: self.pos,
            reason: reason.into(),
        }
    }
}

/// Parses an FSQB container, validating structure, token ranges, total
/// length and padding bits.
pub fn unpack_stream(bytes: &[u8]) -> Result<TokenStream, BitstreamError> {
    let mut r = ByteReader {
        data: bytes,
        pos: 0,
    };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(BitstreamError::Parse {
            offset: 0,
            reason: format!("bad magic {magic:02x?}"),
        });
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(BitstreamError::Parse {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let mode = match r.u8()? {
        0 => PackMode::Raw,
        1 => PackMode::Huffman,
        m => {
            return Err(BitstreamError::Parse {
                offset: 5,
                reason: format!("unknown mode {m}"),
            })
        }
    };
    let dims = r.u8()?;
    if dims == 0 {
        return Err(BitstreamError::Parse {
            offset: 6,
            reason: "zero dimensions".into(),
        });
    }
    let n_stages = r.u8()?;
    if n_stages == 0 {
        return Err(BitstreamError::Parse {
            offset: 7,
            reason: "zero stages".into(),
        });
    }
    let mut stage_levels = Vec::with_capacity(n_stages as usize);
    for stage in 0..n_stages {
        let n_dims = r.u8()?;
        if n_dims != dims {
            return Err(r.error(format!(
                "stage {stage} has {n_dims} level counts, header says {dims} dims"
            )));
        }
        let mut levels = Vec::with_capacity(n_dims as usize);
        for _ in 0..n_dims {
            let l = r.u32()?;
            if l < 2 {
                return Err(r.error(format!("level count {l} below 2")));
            }
            levels.push(l);
        }
        stage_levels.push(levels);
    }
    let sizes = stage_codebooks(&stage_levels)
        .map_err(|_| r.error("stage codebook size overflows u64"))?;
    let rate_num = r.u32()?;
    let rate_den = r.u32()?;
    let frame_rate = Rate::new(rate_num, rate_den)
        .map_err(|e| r.error(format!("invalid frame rate: {e}")))?;
    let frame_count = r.u64()?;
    // every frame costs at least one payload bit per stage, so the
    // remaining bytes bound the plausible frame count; this also keeps
    // allocation sizes tied to the actual input length
    let max_frames = (bytes.len() - r.pos) as u64 * 8 / n_stages as u64;
    if frame_count > max_frames {
        return Err(r.error(format!(
            "frame count {frame_count} cannot fit in {} payload bytes",
            bytes.len() - r.pos
        )));
    }

    let mut tables: Vec<Option<HuffmanTable>> = Vec::new();
    if mode == PackMode::Huffman {
        for (stage, &codebook) in sizes.iter().enumerate() {
            if codebook > MAX_HUFFMAN_CODEBOOK {
                return Err(r.error(format!(
                    "stage {stage} codebook {codebook} too large for a huffman table"
                )));
            }
            let symbol_count = r.u32()? as u64;
            if symbol_count != codebook {
                return Err(r.error(format!(
                    "stage {stage} table covers {symbol_count} symbols, codebook is {codebook}"
                )));
            }
            let lengths = r.take(symbol_count as usize)?;
            let pairs: Vec<(u64, u8)> = lengths
                .iter()
                .enumerate()
                .filter(|&(_, &l)| l != 0)
                .map(|(s, &l)| (s as u64, l))
                .collect();
            if pairs.is_empty() {
                if frame_count != 0 {
                    return Err(r.error(format!("stage {stage} table is empty")));
                }
                tables.push(None);
            } else {
                let table = HuffmanTable::from_lengths(&pairs)
                    .map_err(|_| r.error(format!("stage {stage} code lengths are invalid")))?;
                tables.push(Some(table));
            }
        }
    }

    // expected payload length is fully determined by the header
    let payload_bits: u128 = match mode {
        PackMode::Raw => {
            let bits_per_frame: u128 = sizes.iter().map(|&k| ceil_log2(k) as u128).sum();
            frame_count as u128 * bits_per_frame
        }
        PackMode::Huffman => {
            // variable-length; validated by decoding below
            0
        }
    };
    let payload_start = r.pos;
    let payload = &bytes[payload_start..];

    let frames = match mode {
        PackMode::Raw => {
            let expected_bytes = payload_bits.div_ceil(8);
            if (payload.len() as u128) < expected_bytes {
                return Err(BitstreamError::Parse {
                    offset: bytes.len(),
                    reason: format!(
                        "payload truncated: need {expected_bytes} bytes, have {}",
                        payload.len()
                    ),
                });
            }
            if (payload.len() as u128) > expected_bytes {
                return Err(BitstreamError::Parse {
                    offset: payload_start + expected_bytes as usize,
                    reason: "trailing bytes after payload".into(),
                });
            }
            let widths: Vec<u32> = sizes.iter().map(|&k| ceil_log2(k)).collect();
            let mut reader = BitReader::new(payload);
            let mut frames = Vec::with_capacity(frame_count as usize);
            for f in 0..frame_count {
                let mut frame = Vec::with_capacity(sizes.len());
                for (stage, (&width, &codebook)) in widths.iter().zip(&sizes).enumerate() {
                    let offset = payload_start + (reader.bit_position() / 8) as usize;
                    let token = reader.read_bits(width).ok_or(BitstreamError::Parse {
                        offset: bytes.len(),
                        reason: "payload truncated".into(),
                    })?;
                    if token >= codebook {
                        return Err(BitstreamError::Parse {
                            offset,
                            reason: format!(
                                "frame {f} stage {stage}: token {token} >= codebook {codebook}"
                            ),
                        });
                    }
                    frame.push(token);
                }
                frames.push(frame);
            }
            if !reader.remaining_is_zero() {
                return Err(BitstreamError::Parse {
                    offset: payload_start + (reader.bit_position() / 8) as usize,
                    reason: "nonzero padding bits".into(),
                });
            }
            frames
        }
        PackMode::Huffman => {
            let decoders: Vec<Option<HuffmanDecoder>> = tables
                .iter()
                .map(|t| t.as_ref().map(HuffmanDecoder::new))
                .collect();
            let mut reader = BitReader::new(payload);
            let mut frames = Vec::with_capacity(frame_count as usize);
            for f in 0..frame_count {
                let mut frame = Vec::with_capacity(sizes.len());
                for (stage, decoder) in decoders.iter().enumerate() {
                    let offset = payload_start + (reader.bit_position() / 8) as usize;
                    let decoder = decoder.as_ref().ok_or(BitstreamError::Parse {
                        offset,
                        reason: format!("frame {f} stage {stage}: no table"),
                    })?;
                    let token = decoder.decode(&mut reader).ok_or(BitstreamError::Parse {
                        offset,
                        reason: format!("frame {f} stage {stage}: undecodable code"),
                    })?;
                    frame.push(token);
                }
                frames.push(frame);
            }
            let consumed_bytes = reader.bit_position().div_ceil(8);
            if payload.len() as u64 != consumed_bytes {
                return Err(BitstreamError::Parse {
                    offset: payload_start + consumed_bytes as usize,
                    reason: "trailing bytes after payload".into(),
                });
            }
            if !reader.remaining_is_zero() {
                return Err(BitstreamError::Parse {
                    offset: payload_start + (reader.bit_position() / 8) as usize,
                    reason: "nonzero padding bits".into(),
                });
            }
            frames
        }
    };

    TokenStream::new(frame_rate, stage_levels, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stream(rng: &mut ChaCha8Rng, frames: usize) -> TokenStream {
        let dims = rng.gen_range(1usize..=6);
        let stages = rng.gen_range(1usize..=3);
        // levels <= 9 keep every stage codebook under the huffman guard
        let stage_levels: Vec<Vec<u32>> = (0..stages)
            .map(|_| (0..dims).map(|_| rng.gen_range(2u32..=9)).collect())
            .collect();
        let sizes = stage_codebooks(&stage_levels).unwrap();
        let frames: Vec<Vec<u64>> = (0..frames)
            .map(|_| sizes.iter().map(|&k| rng.gen_range(0..k)).collect())
            .collect();
        TokenStream::new(Rate::new(25, 2).unwrap(), stage_levels, frames).unwrap()
    }

    #[test]
    fn empty_stream_round_trips() {
        let ts = TokenStream::new(Rate::from_hz(25), vec![vec![5; 6]], vec![]).unwrap();
        for mode in [PackMode::Raw, PackMode::Huffman] {
            let bytes = pack_stream(&ts, mode).unwrap();
            assert_eq!(unpack_stream(&bytes).unwrap(), ts);
        }
    }

    #[test]
    fn raw_payload_size_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stage_levels = vec![vec![17u32; 6], vec![5u32; 6]];
        let sizes = stage_codebooks(&stage_levels).unwrap();
        let frames: Vec<Vec<u64>> = (0..1000)
            .map(|_| sizes.iter().map(|&k| rng.gen_range(0..k)).collect())
            .collect();
        let ts = TokenStream::new(Rate::from_hz(25), stage_levels, frames).unwrap();
        let bytes = pack_stream(&ts, PackMode::Raw).unwrap();

        let bits_per_frame: u64 = sizes.iter().map(|&k| ceil_log2(k) as u64).sum();
        let header_len = 4 + 1 + 1 + 1 + 1 + 2 * (1 + 6 * 4) + 4 + 4 + 8;
        assert_eq!(
            bytes.len(),
            header_len + ((1000 * bits_per_frame) as usize).div_ceil(8)
        );
        assert_eq!(unpack_stream(&bytes).unwrap(), ts);
    }

    #[test]
    fn skewed_stream_compresses_under_huffman() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stage_levels = vec![vec![9u32; 3]];
        let codebook = 9u64.pow(3);
        let frames: Vec<Vec<u64>> = (0..2000)
            .map(|_| {
                if rng.gen_bool(0.9) {
                    vec![42]
                } else {
                    vec![rng.gen_range(0..codebook)]
                }
            })
            .collect();
        let ts = TokenStream::new(Rate::from_hz(25), stage_levels, frames).unwrap();
        let raw = pack_stream(&ts, PackMode::Raw).unwrap();
        let huff = pack_stream(&ts, PackMode::Huffman).unwrap();
        assert!(huff.len() < raw.len(), "huff={} raw={}", huff.len(), raw.len());
        assert_eq!(unpack_stream(&huff).unwrap(), ts);
    }

    #[test]
    fn randomized_round_trips_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..50 {
            let frames = match i {
                0 => 0,
                1 => 1,
                _ => rng.gen_range(0usize..200),
            };
            let ts = random_stream(&mut rng, frames);
            for mode in [PackMode::Raw, PackMode::Huffman] {
                let bytes = pack_stream(&ts, mode).unwrap();
                let back = unpack_stream(&bytes).unwrap();
                assert_eq!(back, ts);
            }
        }
    }

    #[test]
    fn structural_corruptions_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ts = random_stream(&mut rng, 20);
        let bytes = pack_stream(&ts, PackMode::Raw).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            unpack_stream(&bad),
            Err(BitstreamError::Parse { offset: 0, .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 9; // version
        assert!(unpack_stream(&bad).is_err());

        let mut bad = bytes.clone();
        bad[5] = 7; // mode
        assert!(unpack_stream(&bad).is_err());

        // truncation at every prefix fails without panicking
        for cut in 0..bytes.len() {
            assert!(unpack_stream(&bytes[..cut]).is_err());
        }

        // trailing garbage is rejected
        let mut bad = bytes.clone();
        bad.push(0xFF);
        assert!(unpack_stream(&bad).is_err());
    }

    #[test]
    fn out_of_range_token_reports_offset() {
        // levels (3,5) per dim -> codebook 15 < 16 = 2^4, so the all-ones
        // bit pattern is an invalid token
        let ts = TokenStream::new(
            Rate::from_hz(25),
            vec![vec![3, 5]],
            vec![vec![0], vec![0]],
        )
        .unwrap();
        let mut bytes = pack_stream(&ts, PackMode::Raw).unwrap();
        let payload_start = bytes.len() - 1;
        bytes[payload_start] = 0xFF;
        match unpack_stream(&bytes) {
            Err(BitstreamError::Parse { offset, reason }) => {
                assert_eq!(offset, payload_start);
                assert!(reason.contains("token"), "{reason}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
