//! Tokenization and analysis toolkit for FSQ-based neural speech codecs.
//!
//! The crate is organized around a symmetric tanh-based finite scalar
//! quantizer and the machinery that surrounds it in a codec pipeline:
//!
//! - [`quantizer`] — scalar/vector FSQ, level sets, token indexing.
//! - [`residual`] — post-hoc decomposition of one FSQ code into a
//!   hierarchy of residual tokens.
//! - [`bitstream`] — bits-per-second accounting, codebook statistics,
//!   canonical Huffman coding and a binary token container.
//! - [`filterbank`] — patched/polyphase, STFT, MDCT and PQMF transforms
//!   with round-trip error measurement.
//! - [`analysis`] — receptive-field and latency calculus, inharmonic
//!   FFT-plan design, loss-sensitivity probing, normalization gain caps.
//! - [`toymodel`] — a small deterministic forward-only transformer
//!   autoencoder used to verify shapes, causality and receptive fields.
//! - [`metrics`] — SI-SDR, spectral distances and feature-matching
//!   losses as pure functions.
//!
//! All operations are pure functions of their inputs; RNG state is an
//! explicit parameter. With the `parallel` feature (default) the heavier
//! batch loops run on rayon with deterministic output assembly; without
//! it everything runs sequentially with identical results.

pub mod analysis;
pub mod bitstream;
pub mod filterbank;
pub mod metrics;
pub mod quantizer;
pub mod rate;
pub mod residual;
pub mod toymodel;

#[doc(hidden)]
pub mod par;

pub use rate::Rate;
