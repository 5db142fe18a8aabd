//! Bitrate accounting, codebook statistics, entropy coding and the
//! binary token container.

mod bits;
mod container;
mod huffman;

pub use bits::{BitReader, BitWriter};
pub use container::{
    pack_stream, unpack_stream, PackMode, TokenStream, MAGIC, MAX_HUFFMAN_CODEBOOK, VERSION,
};
pub use huffman::{normalized_entropy, CodebookHistogram, HuffmanDecoder, HuffmanTable};

use crate::rate::{Rate, Ratio128};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BitstreamError {
    #[error("codebook size must be at least 2 (got {0})")]
    InvalidCodebook(u64),
    #[error("codebook size overflows u64")]
    CodebookOverflow,
    #[error("histogram is empty")]
    NoData,
    #[error("token {token} out of range for codebook size {codebook}")]
    TokenOutOfRange { token: u64, codebook: u64 },
    #[error("histograms cover different codebooks ({left} vs {right})")]
    HistogramMismatch { left: u64, right: u64 },
    #[error("code lengths do not form a prefix code")]
    InvalidCodeLengths,
    #[error("symbol {0} has no code")]
    SymbolWithoutCode(u64),
    #[error("token stream needs at least one stage (and at most 255)")]
    NoStages,
    #[error("dimension count {0} out of range")]
    BadDims(usize),
    #[error("stage has {got} level counts, expected {expected}")]
    StageDimsMismatch { expected: usize, got: usize },
    #[error("frame {frame} has {got} tokens, expected {expected}")]
    FrameShape {
        frame: usize,
        expected: usize,
        got: usize,
    },
    #[error("no stage {0} in stream")]
    NoSuchStage(usize),
    #[error("codebook size {0} too large for a huffman-mode container")]
    HuffmanCodebookTooLarge(u64),
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
}

/// `ceil(log2(k))` for `k >= 2`: the bit width of a raw token.
pub fn ceil_log2(k: u64) -> u32 {
    debug_assert!(k >= 2);
    (k - 1).ilog2() + 1
}

/// Bits per second of a token layout: `frame_rate * sum_i ceil(log2(k_i))`
/// over the per-stage codebook sizes, computed exactly.
pub fn bps(frame_rate: Rate, codebook_sizes: &[u64]) -> Result<Ratio128, BitstreamError> {
    if codebook_sizes.is_empty() {
        return Err(BitstreamError::InvalidCodebook(0));
    }
    let mut bits_per_frame: u64 = 0;
    for &k in codebook_sizes {
        if k < 2 {
            return Err(BitstreamError::InvalidCodebook(k));
        }
        bits_per_frame += ceil_log2(k) as u64;
    }
    let (num, den) = frame_rate.mul_integer(bits_per_frame);
    Ok(Ratio128 { num, den })
}

/// Huffman-coded bits per second: `tokens_per_second * sum_x p(x) l(x)`,
/// exact because `p(x)` is a count ratio.
pub fn huffman_bitrate(
    h: &CodebookHistogram,
    table: &HuffmanTable,
    tokens_per_second: Rate,
) -> Result<Ratio128, BitstreamError> {
    let weighted = table.weighted_length_sum(h)?;
    let num = tokens_per_second.numerator() as u128 * weighted;
    let den = tokens_per_second.denominator() as u128 * h.total() as u128;
    Ok(Ratio128 { num, den })
}
