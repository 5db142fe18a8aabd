//! A small, deterministic, forward-only transformer autoencoder over
//! patched audio, used to verify shapes, causality, receptive fields
//! and numeric stability rather than audio quality.
//!
//! The graph: patch the waveform, map patches to the embedding width
//! with a dense convolution, run encoder blocks (a strided convolution
//! followed by pre-norm transformer layers with sliding-window
//! attention, QK normalization, rotary positions, gated feedforward and
//! LayerScale), project to the low-dimensional bottleneck, and mirror
//! everything on the decoder side with the transposed convolution moved
//! to the end of each block. Convolutions use a weight-normalized
//! parameterization; layer norms use an additive epsilon floor on the
//! standard deviation, which caps how far silence can be amplified.
//!
//! All weights derive from an explicit seed; the same seed always
//! builds bit-identical parameters, and the forward pass is pure.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, LayerKind, LayerSpec};
use crate::bitstream::TokenStream;
use crate::filterbank;
use crate::par;
use crate::quantizer::{self, QuantizerSpec};
use crate::rate::Rate;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidConfig(String),
    #[error("token stream does not match the model ({0})")]
    DecodeError(String),
    #[error("signal too short to measure the receptive field (support reaches the edges)")]
    SaturatedMeasurement,
    #[error(transparent)]
    Quantizer(#[from] quantizer::QuantizerError),
}

/// One encoder block: `layers` transformer layers after a
/// stride-`stride` convolution. The decoder mirrors the block with the
/// transposed convolution at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub layers: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub sample_rate: u32,
    pub patch_size: usize,
    pub blocks: Vec<BlockSpec>,
    pub embed_dim: usize,
    pub head_dim: usize,
    /// Total key extent of the sliding attention window; non-causal
    /// windows split it symmetrically around the query.
    pub window: usize,
    pub causal: bool,
    pub layer_norm_eps: f64,
    pub ff_expansion: usize,
    /// FSQ level count per bottleneck dimension.
    pub levels: Vec<u32>,
    pub seed: u64,
}

impl ModelSpec {
    /// Small defaults for tests and probes.
    pub fn toy(seed: u64) -> Self {
        ModelSpec {
            sample_rate: 16_000,
            patch_size: 320,
            blocks: vec![
                BlockSpec { layers: 2, stride: 1 },
                BlockSpec { layers: 4, stride: 2 },
            ],
            embed_dim: 64,
            head_dim: 16,
            window: 16,
            causal: false,
            layer_norm_eps: 1e-2,
            ff_expansion: 4,
            levels: vec![5; 6],
            seed,
        }
    }

    /// The full-depth block layout (8 layers at the patch rate, then 20
    /// after a x2 downsample, window 128) at a reduced width, for shape
    /// and arithmetic checks.
    pub fn full_depth(seed: u64) -> Self {
        ModelSpec {
            blocks: vec![
                BlockSpec { layers: 8, stride: 1 },
                BlockSpec { layers: 20, stride: 2 },
            ],
            window: 128,
            levels: vec![17; 6],
            ..ModelSpec::toy(seed)
        }
    }

    pub fn total_stride(&self) -> usize {
        self.blocks.iter().map(|b| b.stride).product()
    }

    /// Samples consumed per latent frame.
    pub fn chunk_samples(&self) -> usize {
        self.patch_size * self.total_stride()
    }

    /// Latent frame rate, exact: `sample_rate / (patch * strides)`.
    pub fn latent_rate(&self) -> Result<Rate, ModelError> {
        Rate::new(self.sample_rate, self.chunk_samples() as u32)
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }

    pub fn latent_dim(&self) -> usize {
        self.levels.len()
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.patch_size == 0 {
            return Err(ModelError::InvalidConfig("patch size 0".into()));
        }
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.stride == 0) {
            return Err(ModelError::InvalidConfig("need blocks with positive strides".into()));
        }
        if self.embed_dim == 0
            || self.head_dim == 0
            || !self.embed_dim.is_multiple_of(self.head_dim)
            || !self.head_dim.is_multiple_of(2)
        {
            return Err(ModelError::InvalidConfig(format!(
                "embed dim {} must be a multiple of an even head dim {}",
                self.embed_dim, self.head_dim
            )));
        }
        if self.window == 0 {
            return Err(ModelError::InvalidConfig("window must be at least 1".into()));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return Err(ModelError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.ff_expansion == 0 {
            return Err(ModelError::InvalidConfig("feedforward expansion 0".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| l < 2) {
            return Err(ModelError::InvalidConfig("levels must all be at least 2".into()));
        }
        if self.chunk_samples() as u32 == 0 || self.sample_rate == 0 {
            return Err(ModelError::InvalidConfig("zero rate".into()));
        }
        Ok(())
    }

    pub fn quantizer_spec(&self) -> Result<QuantizerSpec, ModelError> {
        Ok(QuantizerSpec::new(self.levels.clone(), self.latent_rate()?)?)
    }
}

const LAYER_SCALE_INIT: f64 = 1e-2;
const ROPE_BASE: f64 = 10_000.0;
const QK_NORM_GUARD: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Primitive layers
// ---------------------------------------------------------------------------

/// Strided 1d convolution over (time x channels) with a
/// weight-normalized parameterization: each output channel's taps are
/// scaled to unit L2 norm by its gain (gain is 1 at init, so the
/// effective weight is the normalized direction).
#[derive(Debug, Clone)]
struct Conv1d {
    /// taps[tap] is (out x in).
    taps: Vec<Array2<f64>>,
    stride: usize,
    causal: bool,
}

impl Conv1d {
    fn init(rng: &mut ChaCha8Rng, out_ch: usize, in_ch: usize, kernel: usize, stride: usize, causal: bool) -> Self {
        let fan_in = (in_ch * kernel) as f64;
        let std = 1.0 / fan_in.sqrt();
        let mut raw = vec![vec![0.0; in_ch * kernel]; out_ch];
        for row in raw.iter_mut() {
            for v in row.iter_mut() {
                *v = normal(rng) * std;
            }
        }
        // weight normalization with unit gain
        for row in raw.iter_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        let mut taps = Vec::with_capacity(kernel);
        for tap in 0..kernel {
            let mut w = Array2::zeros((out_ch, in_ch));
            for o in 0..out_ch {
                for i in 0..in_ch {
                    w[(o, i)] = raw[o][tap * in_ch + i];
                }
            }
            taps.push(w);
        }
        Conv1d { taps, stride, causal }
    }

    fn kernel(&self) -> usize {
        self.taps.len()
    }

    fn parameter_count(&self) -> usize {
        self.taps.iter().map(|t| t.len()).sum::<usize>() + self.taps[0].dim().0
    }

    fn frobenius(&self) -> f64 {
        self.taps
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Input length must be a multiple of the stride.
    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let (t_in, in_ch) = x.dim();
        let k = self.kernel();
        let s = self.stride;
        debug_assert_eq!(t_in % s, 0);
        let t_out = t_in / s;
        let out_ch = self.taps[0].dim().0;
        let pad_total = k.saturating_sub(s);
        let pad_left = if self.causal { pad_total } else { pad_total / 2 };
        let mut padded = Array2::zeros((t_in + pad_total, in_ch));
        padded.slice_mut(s![pad_left..pad_left + t_in, ..]).assign(x);
        let mut out = Array2::zeros((t_out, out_ch));
        for (tap, w) in self.taps.iter().enumerate() {
            let rows = padded.slice(s![tap..tap + (t_out - 1) * s + 1; s, ..]);
            out = out + rows.dot(&w.t());
        }
        out
    }
}

/// Transposed strided convolution; the mirror of [`Conv1d`], upsampling
/// by its stride.
#[derive(Debug, Clone)]
struct TransposedConv1d {
    taps: Vec<Array2<f64>>, // taps[tap]: (out x in)
    stride: usize,
    causal: bool,
}

impl TransposedConv1d {
    fn init(rng: &mut ChaCha8Rng, out_ch: usize, in_ch: usize, kernel: usize, stride: usize, causal: bool) -> Self {
        let conv = Conv1d::init(rng, out_ch, in_ch, kernel, stride, causal);
        TransposedConv1d {
            taps: conv.taps,
            stride,
            causal,
        }
    }

    fn kernel(&self) -> usize {
        self.taps.len()
    }

    fn parameter_count(&self) -> usize {
        self.taps.iter().map(|t| t.len()).sum::<usize>() + self.taps[0].dim().0
    }

    fn frobenius(&self) -> f64 {
        self.taps
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let (t_in, _in_ch) = x.dim();
        let k = self.kernel();
        let s = self.stride;
        let out_ch = self.taps[0].dim().0;
        let full_len = (t_in - 1) * s + k;
        let mut full = Array2::zeros((full_len, out_ch));
        for (tap, w) in self.taps.iter().enumerate() {
            let contrib = x.dot(&w.t()); // (t_in x out)
            let mut rows = full.slice_mut(s![tap..tap + (t_in - 1) * s + 1; s, ..]);
            rows += &contrib;
        }
        let t_out = t_in * s;
        let lead = if self.causal { 0 } else { k.saturating_sub(s) / 2 };
        full.slice(s![lead..lead + t_out, ..]).to_owned()
    }
}

fn layer_norm(x: &Array2<f64>, eps: f64) -> Array2<f64> {
    let (t, c) = x.dim();
    let mut out = Array2::zeros((t, c));
    for row in 0..t {
        let r = x.row(row);
        let mean = r.sum() / c as f64;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let denom = var.sqrt() + eps;
        for col in 0..c {
            out[(row, col)] = (x[(row, col)] - mean) / denom;
        }
    }
    out
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the draw order independent of library internals
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Debug, Clone)]
struct TransformerLayer {
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    ls_attn: Array1<f64>,
    w_gate: Array2<f64>,
    w_up: Array2<f64>,
    w_down: Array2<f64>,
    ls_ff: Array1<f64>,
    head_dim: usize,
    window: usize,
    causal: bool,
    eps: f64,
}

fn linear_init(rng: &mut ChaCha8Rng, out_ch: usize, in_ch: usize) -> Array2<f64> {
    let std = 1.0 / (in_ch as f64).sqrt();
    let mut w = Array2::zeros((out_ch, in_ch));
    for v in w.iter_mut() {
        *v = normal(rng) * std;
    }
    w
}

impl TransformerLayer {
    fn init(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> Self {
        let e = spec.embed_dim;
        let hidden = e * spec.ff_expansion;
        TransformerLayer {
            wq: linear_init(rng, e, e),
            wk: linear_init(rng, e, e),
            wv: linear_init(rng, e, e),
            wo: linear_init(rng, e, e),
            ls_attn: Array1::from_elem(e, LAYER_SCALE_INIT),
            w_gate: linear_init(rng, hidden, e),
            w_up: linear_init(rng, hidden, e),
            w_down: linear_init(rng, e, hidden),
            ls_ff: Array1::from_elem(e, LAYER_SCALE_INIT),
            head_dim: spec.head_dim,
            window: spec.window,
            causal: spec.causal,
            eps: spec.layer_norm_eps,
        }
    }

    fn parameter_count(&self) -> usize {
        self.wq.len()
            + self.wk.len()
            + self.wv.len()
            + self.wo.len()
            + self.w_gate.len()
            + self.w_up.len()
            + self.w_down.len()
            + self.ls_attn.len()
            + self.ls_ff.len()
    }

    fn frobenius_sum_db(&self) -> f64 {
        let fr = |w: &Array2<f64>| w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mats = [&self.wq, &self.wk, &self.wv, &self.wo, &self.w_gate, &self.w_up, &self.w_down];
        mats.iter()
            .map(|w| 20.0 * fr(w).max(1.0).log10())
            .sum()
    }

    /// Sliding-window self-attention with QK normalization and rotary
    /// positions, pre-norm and LayerScale on the residual branch.
    fn attention(&self, x: &Array2<f64>) -> Array2<f64> {
        let (t, e) = x.dim();
        let normed = layer_norm(x, self.eps);
        let q = normed.dot(&self.wq.t());
        let k = normed.dot(&self.wk.t());
        let v = normed.dot(&self.wv.t());
        let heads = e / self.head_dim;
        let hd = self.head_dim;
        let scale = (hd as f64).sqrt();

        // per-head unit normalization followed by rotary rotation; the
        // rotation preserves the unit norm
        let prep = |m: &Array2<f64>| -> Array2<f64> {
            let mut out = m.clone();
            for row in 0..t {
                for h in 0..heads {
                    let base = h * hd;
                    let mut norm = 0.0;
                    for i in 0..hd {
                        norm += out[(row, base + i)] * out[(row, base + i)];
                    }
                    let norm = norm.sqrt().max(QK_NORM_GUARD);
                    for i in 0..hd {
                        out[(row, base + i)] /= norm;
                    }
                    for pair in 0..hd / 2 {
                        let theta = row as f64
                            * ROPE_BASE.powf(-2.0 * pair as f64 / hd as f64);
                        let (sin, cos) = theta.sin_cos();
                        let a = out[(row, base + 2 * pair)];
                        let b = out[(row, base + 2 * pair + 1)];
                        out[(row, base + 2 * pair)] = a * cos - b * sin;
                        out[(row, base + 2 * pair + 1)] = a * sin + b * cos;
                    }
                }
            }
            out
        };
        let q = prep(&q);
        let k = prep(&k);

        let back = if self.causal {
            self.window - 1
        } else {
            self.window / 2
        };
        let forward = if self.causal {
            0
        } else {
            self.window.div_ceil(2) - 1
        };

        let rows = par::map_indexed(t, |i| {
            let lo = i.saturating_sub(back);
            let hi = (i + forward).min(t - 1);
            let mut out_row = vec![0.0; e];
            for h in 0..heads {
                let base = h * hd;
                let mut logits = Vec::with_capacity(hi - lo + 1);
                for j in lo..=hi {
                    let mut dot = 0.0;
                    for d in 0..hd {
                        dot += q[(i, base + d)] * k[(j, base + d)];
                    }
                    logits.push(dot * scale);
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    denom += *l;
                }
                for (j, weight) in (lo..=hi).zip(&logits) {
                    let w = weight / denom;
                    for d in 0..hd {
                        out_row[base + d] += w * v[(j, base + d)];
                    }
                }
            }
            out_row
        });
        let mut ctx = Array2::zeros((t, e));
        for (i, row) in rows.into_iter().enumerate() {
            for (c, val) in row.into_iter().enumerate() {
                ctx[(i, c)] = val;
            }
        }
        let projected = ctx.dot(&self.wo.t());
        let mut out = x.clone();
        for row in 0..t {
            for c in 0..e {
                out[(row, c)] += self.ls_attn[c] * projected[(row, c)];
            }
        }
        out
    }

    fn feedforward(&self, x: &Array2<f64>) -> Array2<f64> {
        let (t, e) = x.dim();
        let normed = layer_norm(x, self.eps);
        let gate = normed.dot(&self.w_gate.t());
        let up = normed.dot(&self.w_up.t());
        let mut hidden = gate;
        for (h, u) in hidden.iter_mut().zip(up.iter()) {
            *h = silu(*h) * u;
        }
        let projected = hidden.dot(&self.w_down.t());
        let mut out = x.clone();
        for row in 0..t {
            for c in 0..e {
                out[(row, c)] += self.ls_ff[c] * projected[(row, c)];
            }
        }
        out
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.feedforward(&self.attention(x))
    }
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct EncoderBlock {
    conv: Conv1d,
    layers: Vec<TransformerLayer>,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    layers: Vec<TransformerLayer>,
    conv: TransposedConv1d,
}

/// Build-time facts: parameter count and a conservative product bound on
/// the linear gain of the deepest path, used by stability checks.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub parameter_count: usize,
    pub linear_gain_db: f64,
}

/// Latent frames before quantization, bounded to (-1, 1) by the
/// bottleneck tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub values: Array2<f64>,
    pub frame_rate: Rate,
}

#[derive(Debug, Clone)]
pub struct ToyCodec {
    spec: ModelSpec,
    input_conv: Conv1d,
    encoder: Vec<EncoderBlock>,
    latent_conv: Conv1d,
    unlatent_conv: Conv1d,
    decoder: Vec<DecoderBlock>,
    output_conv: Conv1d,
    report: BuildReport,
}

fn block_kernel(stride: usize) -> usize {
    if stride == 1 {
        3
    } else {
        2 * stride
    }
}

/// Deterministically builds all weights from the spec's seed.
pub fn build(spec: &ModelSpec) -> Result<ToyCodec, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e = spec.embed_dim;
    let d = spec.latent_dim();

    let input_conv = Conv1d::init(&mut rng, e, spec.patch_size, 3, 1, spec.causal);
    let mut encoder = Vec::with_capacity(spec.blocks.len());
    for b in &spec.blocks {
        let conv = Conv1d::init(&mut rng, e, e, block_kernel(b.stride), b.stride, spec.causal);
        let layers = (0..b.layers)
            .map(|_| TransformerLayer::init(&mut rng, spec))
            .collect();
        encoder.push(EncoderBlock { conv, layers });
    }
    let latent_conv = Conv1d::init(&mut rng, d, e, 3, 1, spec.causal);
    let unlatent_conv = Conv1d::init(&mut rng, e, d, 3, 1, spec.causal);
    let mut decoder = Vec::with_capacity(spec.blocks.len());
    for b in spec.blocks.iter().rev() {
        let layers = (0..b.layers)
            .map(|_| TransformerLayer::init(&mut rng, spec))
            .collect();
        let conv =
            TransposedConv1d::init(&mut rng, e, e, block_kernel(b.stride), b.stride, spec.causal);
        decoder.push(DecoderBlock { layers, conv });
    }
    let output_conv = Conv1d::init(&mut rng, spec.patch_size, e, 3, 1, spec.causal);

    let mut params = input_conv.parameter_count()
        + latent_conv.parameter_count()
        + unlatent_conv.parameter_count()
        + output_conv.parameter_count();
    let mut gain_db = [&input_conv, &latent_conv, &unlatent_conv, &output_conv]
        .iter()
        .map(|c| 20.0 * c.frobenius().max(1.0).log10())
        .sum::<f64>();
    for b in &encoder {
        params += b.conv.parameter_count();
        gain_db += 20.0 * b.conv.frobenius().max(1.0).log10();
        for l in &b.layers {
            params += l.parameter_count();
            gain_db += l.frobenius_sum_db();
        }
    }
    for b in &decoder {
        params += b.conv.parameter_count();
        gain_db += 20.0 * b.conv.frobenius().max(1.0).log10();
        for l in &b.layers {
            params += l.parameter_count();
            gain_db += l.frobenius_sum_db();
        }
    }

    Ok(ToyCodec {
        spec: spec.clone(),
        input_conv,
        encoder,
        latent_conv,
        unlatent_conv,
        decoder,
        output_conv,
        report: BuildReport {
            parameter_count: params,
            linear_gain_db: gain_db,
        },
    })
}

impl ToyCodec {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn report(&self) -> &BuildReport {
        &self.report
    }

    fn pad_input(&self, x: &[f64]) -> Vec<f64> {
        let chunk = self.spec.chunk_samples();
        let len = x.len().div_ceil(chunk).max(1) * chunk;
        let mut padded = x.to_vec();
        padded.resize(len, 0.0);
        padded
    }

    /// Raw (pre-tanh) latent frames.
    fn encode_raw(&self, x: &[f64]) -> Result<Array2<f64>, ModelError> {
        let padded = self.pad_input(x);
        let patches = filterbank::patch_forward(&padded, self.spec.patch_size)
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        let mut h = Array2::from_shape_fn(
            (patches.num_frames(), self.spec.patch_size),
            |(i, j)| patches.frames[i][j],
        );
        h = self.input_conv.forward(&h);
        for block in &self.encoder {
            h = block.conv.forward(&h);
            for layer in &block.layers {
                h = layer.forward(&h);
            }
        }
        Ok(self.latent_conv.forward(&h))
    }

    /// Runs the encoder and quantizes each latent frame to a token.
    pub fn encode(&self, x: &[f64]) -> Result<(LatentSequence, TokenStream), ModelError> {
        let raw = self.encode_raw(x)?;
        let qspec = self.spec.quantizer_spec()?;
        let rate = self.spec.latent_rate()?;
        let mut tanh_latents = Array2::zeros(raw.dim());
        let mut frames = Vec::with_capacity(raw.dim().0);
        for (i, row) in raw.rows().into_iter().enumerate() {
            let z: Vec<f64> = row.to_vec();
            let frame = quantizer::quantize_vector(&z, &qspec)?;
            frames.push(vec![frame.index]);
            for (j, v) in z.iter().enumerate() {
                tanh_latents[(i, j)] = v.tanh();
            }
        }
        let stream = TokenStream::new(rate, vec![self.spec.levels.clone()], frames)
            .map_err(|e| ModelError::DecodeError(e.to_string()))?;
        Ok((
            LatentSequence {
                values: tanh_latents,
                frame_rate: rate,
            },
            stream,
        ))
    }

    fn decode_values(&self, latents: &Array2<f64>) -> Result<Vec<f64>, ModelError> {
        let mut h = self.unlatent_conv.forward(latents);
        for block in &self.decoder {
            for layer in &block.layers {
                h = layer.forward(&h);
            }
            h = block.conv.forward(&h);
        }
        let patches = self.output_conv.forward(&h);
        let (frames, patch) = patches.dim();
        let fm = filterbank::FrameMatrix {
            frames: (0..frames)
                .map(|i| patches.row(i).to_vec())
                .collect(),
            original_len: frames * patch,
        };
        filterbank::patch_inverse(&fm, patch).map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }

    /// Reconstructs audio from a single-stage token stream produced by
    /// [`ToyCodec::encode`]. Output length is `frames * patch * strides`.
    pub fn decode(&self, tokens: &TokenStream) -> Result<Vec<f64>, ModelError> {
        if tokens.stages() != 1 {
            return Err(ModelError::DecodeError(format!(
                "expected 1 stage, got {}",
                tokens.stages()
            )));
        }
        if tokens.stage_levels()[0] != self.spec.levels {
            return Err(ModelError::DecodeError("level counts differ".into()));
        }
        let qspec = self.spec.quantizer_spec()?;
        let d = self.spec.latent_dim();
        let mut latents = Array2::zeros((tokens.frames().len(), d));
        for (i, frame) in tokens.frames().iter().enumerate() {
            let values = quantizer::token_to_values(frame[0], &qspec)?;
            for (j, v) in values.into_iter().enumerate() {
                latents[(i, j)] = v;
            }
        }
        self.decode_values(&latents)
    }

    /// Full round trip through the continuous (tanh) bottleneck, skipping
    /// quantization so perturbations propagate smoothly; used by the
    /// receptive-field and causality probes.
    pub fn forward_continuous(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let raw = self.encode_raw(x)?;
        let tanh = raw.mapv(f64::tanh);
        self.decode_values(&tanh)
    }

    /// The sequence-mixing layers of the full graph, for the analytic
    /// receptive-field calculus. Rates are the finer-side rates, so the
    /// analytic total upper-bounds the measured spread.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let sr = self.spec.sample_rate as f64;
        let patch_rate = sr / self.spec.patch_size as f64;
        let causal = self.spec.causal;
        let with_causal = |mut l: LayerSpec| {
            l.causal = causal;
            l
        };
        let mut layers = Vec::new();
        // patching is a stride-P reshape: one step at the patch rate
        layers.push(with_causal(LayerSpec::conv(1, 1, 1, patch_rate)));
        layers.push(with_causal(LayerSpec::conv(3, 1, 1, patch_rate)));
        let mut rate = patch_rate;
        for b in &self.spec.blocks {
            layers.push(with_causal(LayerSpec::conv(
                block_kernel(b.stride),
                b.stride,
                1,
                rate,
            )));
            rate /= b.stride as f64;
            for _ in 0..b.layers {
                layers.push(with_causal(LayerSpec::attention(self.spec.window, rate)));
            }
        }
        layers.push(with_causal(LayerSpec::conv(3, 1, 1, rate)));
        layers.push(with_causal(LayerSpec::conv(3, 1, 1, rate)));
        for b in self.spec.blocks.iter().rev() {
            for _ in 0..b.layers {
                layers.push(with_causal(LayerSpec::attention(self.spec.window, rate)));
            }
            rate *= b.stride as f64;
            layers.push(with_causal(LayerSpec {
                kind: LayerKind::TransposedConv {
                    kernel: block_kernel(b.stride),
                    stride: b.stride,
                },
                causal,
                rate_hz: rate,
            }));
        }
        layers.push(with_causal(LayerSpec::conv(3, 1, 1, patch_rate)));
        layers.push(with_causal(LayerSpec::conv(1, 1, 1, patch_rate)));
        layers
    }

    /// Analytic receptive field of the full graph in seconds.
    pub fn analytic_receptive_field(&self) -> f64 {
        analysis::receptive_field(&self.layer_specs())
            .expect("layer specs are valid")
            .total
    }
}

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RfMeasurement {
    /// Width of the perturbation's influence on the output, in seconds.
    pub seconds: f64,
    pub support: (usize, usize),
    pub perturbation_sample: usize,
}

/// Empirical receptive field: the support width of the output difference
/// after adding an impulse to the middle of a seeded noise signal,
/// through the continuous bottleneck.
pub fn measure_receptive_field(
    model: &ToyCodec,
    total_samples: usize,
) -> Result<RfMeasurement, ModelError> {
    const THRESHOLD: f64 = 1e-7;
    let chunk = model.spec().chunk_samples();
    let len = total_samples.div_ceil(chunk).max(2) * chunk;
    let mut rng = ChaCha8Rng::seed_from_u64(model.spec().seed ^ 0x5eed);
    let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let t = len / 2 / chunk * chunk; // perturb on a latent-frame boundary
    let mut x2 = x.clone();
    x2[t] += 1.0;

    let y1 = model.forward_continuous(&x)?;
    let y2 = model.forward_continuous(&x2)?;
    let mut lo = None;
    let mut hi = None;
    for (i, (a, b)) in y1.iter().zip(&y2).enumerate() {
        if (a - b).abs() > THRESHOLD {
            if lo.is_none() {
                lo = Some(i);
            }
            hi = Some(i);
        }
    }
    let (lo, hi) = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => (t, t),
    };
    if lo == 0 || hi + 1 >= y1.len() {
        return Err(ModelError::SaturatedMeasurement);
    }
    Ok(RfMeasurement {
        seconds: (hi - lo + 1) as f64 / model.spec().sample_rate as f64,
        support: (lo, hi),
        perturbation_sample: t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalityReport {
    pub perturbation_sample: usize,
    /// Largest output change strictly before the perturbation sample;
    /// exactly 0.0 for a causal build.
    pub max_leak_before: f64,
    /// First output index that changed at all.
    pub first_affected: Option<usize>,
    /// Analytic streaming latency of a causal build, seconds.
    pub causal_latency_seconds: f64,
}

/// Perturbs a latent-frame boundary mid-signal and reports whether any
/// output strictly before it changes.
pub fn check_causality(model: &ToyCodec) -> Result<CausalityReport, ModelError> {
    let chunk = model.spec().chunk_samples();
    let chunks = 16usize;
    let len = chunks * chunk;
    let mut rng = ChaCha8Rng::seed_from_u64(model.spec().seed ^ 0xca05a1);
    let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let t = (chunks / 2) * chunk;
    let mut x2 = x.clone();
    x2[t] += 0.5;

    let y1 = model.forward_continuous(&x)?;
    let y2 = model.forward_continuous(&x2)?;
    let mut max_leak_before = 0.0f64;
    let mut first_affected = None;
    for (i, (a, b)) in y1.iter().zip(&y2).enumerate() {
        let d = (a - b).abs();
        if d > 0.0 {
            if i < t {
                max_leak_before = max_leak_before.max(d);
            }
            if first_affected.is_none() {
                first_affected = Some(i);
            }
        }
    }
    let rate = model.spec().latent_rate()?;
    Ok(CausalityReport {
        perturbation_sample: t,
        max_leak_before,
        first_affected,
        causal_latency_seconds: rate.period_seconds(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> ModelSpec {
        ModelSpec {
            sample_rate: 16_000,
            patch_size: 64,
            blocks: vec![
                BlockSpec { layers: 1, stride: 1 },
                BlockSpec { layers: 1, stride: 2 },
            ],
            embed_dim: 32,
            head_dim: 8,
            window: 8,
            causal: false,
            layer_norm_eps: 1e-2,
            ff_expansion: 2,
            levels: vec![5; 4],
            seed,
        }
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let spec = small_spec(7);
        let a = build(&spec).unwrap();
        let b = build(&spec).unwrap();
        let x: Vec<f64> = (0..2560).map(|i| (i as f64 * 0.01).sin() * 0.3).collect();
        let ya = a.forward_continuous(&x).unwrap();
        let yb = b.forward_continuous(&x).unwrap();
        assert_eq!(ya, yb);
        assert_eq!(a.report(), b.report());

        let c = build(&small_spec(8)).unwrap();
        let yc = c.forward_continuous(&x).unwrap();
        assert_ne!(ya, yc);
    }

    #[test]
    fn full_depth_shape_builds() {
        let spec = ModelSpec::full_depth(1);
        assert_eq!(spec.blocks[0].layers, 8);
        assert_eq!(spec.blocks[1].layers, 20);
        assert_eq!(spec.blocks[1].stride, 2);
        let model = build(&spec).unwrap();
        assert!(model.report().parameter_count > 1_000_000);
        assert_eq!(spec.latent_rate().unwrap(), Rate::from_hz(25));
    }

    #[test]
    fn degenerate_window_builds() {
        let mut spec = small_spec(3);
        spec.window = 1;
        let model = build(&spec).unwrap();
        let x = vec![0.1; 1280];
        let y = model.forward_continuous(&x).unwrap();
        assert_eq!(y.len(), 1280);
    }

    #[test]
    fn encode_shapes_follow_stride_arithmetic() {
        let mut spec = ModelSpec::toy(5);
        spec.blocks = vec![
            BlockSpec { layers: 1, stride: 1 },
            BlockSpec { layers: 1, stride: 2 },
        ];
        let model = build(&spec).unwrap();
        let x = vec![0.05; 81_920];
        let (latents, tokens) = model.encode(&x).unwrap();
        assert_eq!(latents.values.dim(), (128, 6));
        assert_eq!(tokens.frames().len(), 128);
        assert_eq!(latents.frame_rate, Rate::from_hz(25));

        // doubling the input length doubles the frame count
        let x2 = vec![0.05; 163_840];
        let (l2, _) = model.encode(&x2).unwrap();
        assert_eq!(l2.values.dim().0, 256);

        // latents live strictly inside (-1, 1)
        for &v in latents.values.iter() {
            assert!(v > -1.0 && v < 1.0);
        }
    }

    #[test]
    fn silence_stays_finite_and_small() {
        let spec = small_spec(11);
        let model = build(&spec).unwrap();
        let x = vec![0.0; 4096];
        let (latents, tokens) = model.encode(&x).unwrap();
        for &v in latents.values.iter() {
            assert!(v.is_finite());
        }
        let y = model.decode(&tokens).unwrap();
        for &v in &y {
            assert!(v.is_finite());
        }
        let y = model.forward_continuous(&x).unwrap();
        for &v in &y {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn hard_inputs_stay_finite() {
        let spec = small_spec(13);
        let model = build(&spec).unwrap();
        // full-scale square wave exercises the epsilon cap hard
        let square: Vec<f64> = (0..4096).map(|i| if (i / 32) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for x in [square, vec![1.0; 4096], vec![-1.0; 4096]] {
            let y = model.forward_continuous(&x).unwrap();
            assert!(y.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn decode_round_trip_lengths_match() {
        let spec = small_spec(17);
        let model = build(&spec).unwrap();
        let x = vec![0.25; 3000];
        let (_, tokens) = model.encode(&x).unwrap();
        let y = model.decode(&tokens).unwrap();
        // padded to a chunk multiple
        let chunk = spec.chunk_samples();
        assert_eq!(y.len(), 3000usize.div_ceil(chunk) * chunk);

        // all-center tokens decode deterministically
        let frames = vec![vec![tokens.frames()[0][0]]; 4];
        let stream = TokenStream::new(
            spec.latent_rate().unwrap(),
            vec![spec.levels.clone()],
            frames,
        )
        .unwrap();
        let a = model.decode(&stream).unwrap();
        let b = model.decode(&stream).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));

        // a different seed maps the same tokens elsewhere
        let other = build(&small_spec(18)).unwrap();
        assert_ne!(other.decode(&stream).unwrap(), a);
    }

    #[test]
    fn decode_rejects_mismatched_streams() {
        let spec = small_spec(19);
        let model = build(&spec).unwrap();
        let stream = TokenStream::new(
            Rate::from_hz(25),
            vec![vec![3; 4]],
            vec![vec![0]],
        )
        .unwrap();
        assert!(matches!(
            model.decode(&stream),
            Err(ModelError::DecodeError(_))
        ));
    }

    #[test]
    fn empirical_rf_bounded_by_analytic() {
        let spec = small_spec(23);
        let model = build(&spec).unwrap();
        let analytic = model.analytic_receptive_field();
        let samples = ((3.0 * analytic * 16_000.0) as usize).max(4096);
        let m = measure_receptive_field(&model, samples).unwrap();
        assert!(
            m.seconds <= analytic,
            "empirical {} vs analytic {analytic}",
            m.seconds
        );
        assert!(m.seconds > 0.0);
    }

    #[test]
    fn window_growth_widens_empirical_rf() {
        let mut widths = Vec::new();
        for window in [1usize, 4, 16] {
            let mut spec = small_spec(29);
            spec.window = window;
            let model = build(&spec).unwrap();
            let m = measure_receptive_field(&model, 16_384).unwrap();
            widths.push(m.seconds);
        }
        assert!(widths[0] < widths[1] && widths[1] < widths[2], "{widths:?}");
    }

    #[test]
    fn single_window_rf_close_to_conv_only() {
        let mut spec = small_spec(31);
        spec.window = 1;
        spec.blocks = vec![BlockSpec { layers: 1, stride: 1 }];
        let model = build(&spec).unwrap();
        let m = measure_receptive_field(&model, 8192).unwrap();
        // with W=1 and a single stride-1 block every layer runs at the
        // patch rate, so the exact composed support is sum(span-1)+1
        // steps; the per-layer sum is only an upper bound
        let composed_steps: usize = model
            .layer_specs()
            .iter()
            .map(|l| l.span_steps().saturating_sub(1))
            .sum::<usize>()
            + 1;
        let patch_seconds = spec.patch_size as f64 / spec.sample_rate as f64;
        let composed = composed_steps as f64 * patch_seconds;
        assert!(m.seconds <= model.analytic_receptive_field());
        assert!(
            (m.seconds - composed).abs() <= patch_seconds,
            "measured {} composed {composed}",
            m.seconds
        );
    }

    #[test]
    fn causal_build_never_leaks_backwards() {
        let mut spec = small_spec(37);
        spec.causal = true;
        let model = build(&spec).unwrap();
        let report = check_causality(&model).unwrap();
        assert_eq!(report.max_leak_before, 0.0);
        assert!(report.first_affected.is_some());
        assert!(report.first_affected.unwrap() >= report.perturbation_sample);
        assert_eq!(
            report.causal_latency_seconds,
            1.0 / spec.latent_rate().unwrap().as_f64()
        );
    }

    #[test]
    fn non_causal_build_leaks_backwards() {
        let spec = small_spec(37);
        let model = build(&spec).unwrap();
        let report = check_causality(&model).unwrap();
        assert!(report.max_leak_before > 0.0);
    }

    #[test]
    fn silence_amplification_stays_under_cap_plus_gain() {
        let spec = small_spec(41);
        let model = build(&spec).unwrap();
        // noise floor at -80 dBFS
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1e-4..1e-4)).collect();
        let input_rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        let y = model.forward_continuous(&x).unwrap();
        let output_rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        let gain_db = 20.0 * (output_rms / input_rms).log10();
        let cap = analysis::layernorm_gain_cap(spec.layer_norm_eps);
        assert!(
            gain_db <= cap + model.report().linear_gain_db,
            "gain {gain_db} dB vs cap {cap} + {}",
            model.report().linear_gain_db
        );
    }

    #[test]
    fn latent_rate_formula_is_exact() {
        for (patch, strides, expect) in [
            (320usize, vec![1usize, 2], (25u32, 1u32)),
            (320, vec![2, 2], (25, 2)),
            (160, vec![1], (100, 1)),
        ] {
            let mut spec = small_spec(1);
            spec.patch_size = patch;
            spec.blocks = strides
                .into_iter()
                .map(|stride| BlockSpec { layers: 1, stride })
                .collect();
            let rate = spec.latent_rate().unwrap();
            assert_eq!(rate, Rate::new(expect.0, expect.1).unwrap());
        }
    }
}
