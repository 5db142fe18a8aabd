//! Receptive-field and latency calculus, inharmonic FFT-plan design,
//! loss-sensitivity probing, and normalization gain caps.

use rustfft::num_complex::Complex;

use crate::filterbank::{self, StftSpec};
use crate::par;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("plan size overflows")]
    CapacityError,
    #[error(transparent)]
    Filterbank(#[from] filterbank::FilterbankError),
}

// ---------------------------------------------------------------------------
// Receptive field / latency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Conv { kernel: usize, stride: usize, dilation: usize },
    TransposedConv { kernel: usize, stride: usize },
    Attention { window: usize },
    Pointwise,
}

/// One sequence-mixing layer: what it spans and at which temporal rate
/// it operates. For downsampling layers the rate is the input-side
/// (finer) rate; for upsampling layers the output-side rate, so spans
/// are always measured on the finer grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub causal: bool,
    pub rate_hz: f64,
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, dilation: usize, rate_hz: f64) -> Self {
        LayerSpec {
            kind: LayerKind::Conv { kernel, stride, dilation },
            causal: false,
            rate_hz,
        }
    }

    pub fn attention(window: usize, rate_hz: f64) -> Self {
        LayerSpec {
            kind: LayerKind::Attention { window },
            causal: false,
            rate_hz,
        }
    }

    pub fn causal(mut self) -> Self {
        self.causal = true;
        self
    }

    /// Extent of the layer's input span in steps at its rate. Causal
    /// layers cover the same number of steps, one-sided.
    pub fn span_steps(&self) -> usize {
        match self.kind {
            LayerKind::Conv { kernel, dilation, .. } => {
                if kernel == 0 {
                    0
                } else {
                    (kernel - 1) * dilation.max(1) + 1
                }
            }
            LayerKind::TransposedConv { kernel, .. } => kernel,
            LayerKind::Attention { window } => window,
            LayerKind::Pointwise => 0,
        }
    }

    /// Receptive-field contribution in seconds.
    pub fn rf_seconds(&self) -> f64 {
        self.span_steps() as f64 / self.rate_hz
    }
}

/// Per-layer and network receptive fields; the network total is the sum
/// of per-layer spans since each layer can relay information across its
/// whole span.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptiveFieldReport {
    pub per_layer_seconds: Vec<f64>,
    pub max_per_layer: f64,
    pub total: f64,
}

pub fn receptive_field(layers: &[LayerSpec]) -> Result<ReceptiveFieldReport, AnalysisError> {
    if layers.is_empty() {
        return Err(AnalysisError::InvalidConfig("empty layer list".into()));
    }
    for l in layers {
        if l.rate_hz.is_nan() || l.rate_hz <= 0.0 {
            return Err(AnalysisError::InvalidConfig(format!(
                "layer rate must be positive, got {}",
                l.rate_hz
            )));
        }
    }
    let per_layer_seconds: Vec<f64> = layers.iter().map(|l| l.rf_seconds()).collect();
    let max_per_layer = per_layer_seconds.iter().cloned().fold(0.0, f64::max);
    let total = per_layer_seconds.iter().sum();
    Ok(ReceptiveFieldReport {
        per_layer_seconds,
        max_per_layer,
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamingMode {
    /// Strictly causal processing; latency is one latent frame.
    Causal,
    /// Fixed-size chunked inference; latency is two chunks regardless of
    /// the overlap used to hide boundary effects.
    Chunked { chunk_seconds: f64, overlap_seconds: f64 },
}

/// Streaming latency in seconds.
pub fn latency(latent_rate_hz: f64, mode: StreamingMode) -> Result<f64, AnalysisError> {
    if latent_rate_hz.is_nan() || latent_rate_hz <= 0.0 {
        return Err(AnalysisError::InvalidConfig(
            "latent rate must be positive".into(),
        ));
    }
    Ok(match mode {
        StreamingMode::Causal => 1.0 / latent_rate_hz,
        StreamingMode::Chunked { chunk_seconds, .. } => 2.0 * chunk_seconds,
    })
}

// ---------------------------------------------------------------------------
// FFT plan design
// ---------------------------------------------------------------------------

/// Multi-resolution STFT plan: strictly increasing even FFT sizes with
/// hop = size/2 and a Hann window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FftPlan {
    sizes: Vec<usize>,
}

impl FftPlan {
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self, AnalysisError> {
        if sizes.is_empty() {
            return Err(AnalysisError::InvalidConfig("empty plan".into()));
        }
        for w in sizes.windows(2) {
            if w[1] <= w[0] {
                return Err(AnalysisError::InvalidConfig(
                    "sizes must be strictly increasing".into(),
                ));
            }
        }
        if sizes.iter().any(|&s| s < 2 || s % 2 != 0) {
            return Err(AnalysisError::InvalidConfig("sizes must be even".into()));
        }
        Ok(FftPlan { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hops(&self) -> Vec<usize> {
        self.sizes.iter().map(|s| s / 2).collect()
    }

    /// Hann-window STFT specs, one per resolution.
    pub fn stft_specs(&self) -> Result<Vec<StftSpec>, AnalysisError> {
        self.sizes
            .iter()
            .map(|&s| StftSpec::new(s, s / 2, filterbank::WindowKind::Hann).map_err(Into::into))
            .collect()
    }
}

/// Default discriminator FFT sizes: a golden-ratio hop progression from
/// base hop 39, refined so consecutive resolutions stay maximally
/// inharmonic.
pub const DEFAULT_FFT_SIZES: [usize; 8] = [78, 126, 206, 334, 542, 876, 1418, 2296];

/// Golden ratio, the hop progression factor that inharmonic plans are
/// built around.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// Geometric hop progression: `hop_i = round(base_hop * ratio^i)`,
/// `size_i = 2 * hop_i`, duplicates collapsed.
pub fn fft_plan(base_hop: usize, ratio: f64, count: usize) -> Result<FftPlan, AnalysisError> {
    if base_hop == 0 || count == 0 || ratio.is_nan() || ratio <= 1.0 {
        return Err(AnalysisError::InvalidConfig(
            "need base_hop >= 1, ratio > 1, count >= 1".into(),
        ));
    }
    let mut sizes = Vec::with_capacity(count);
    for i in 0..count {
        let hop = (base_hop as f64 * ratio.powi(i as i32)).round();
        if !hop.is_finite() || hop > (usize::MAX / 4) as f64 {
            return Err(AnalysisError::CapacityError);
        }
        let size = 2 * hop as usize;
        if sizes.last() != Some(&size) {
            sizes.push(size);
        }
    }
    FftPlan::from_sizes(sizes)
}

/// How close the plan's hop ratios sit to integers: the sum over ordered
/// hop pairs of `max(0, 1 - 2*dist(r, Z))^2` with `r = hop_j / hop_i`.
/// Higher means more harmonic overlap between resolutions, i.e. worse.
pub fn inharmonicity_score(plan: &FftPlan) -> Result<f64, AnalysisError> {
    let hops = plan.hops();
    if hops.len() < 2 {
        return Err(AnalysisError::InvalidConfig(
            "score needs at least two sizes".into(),
        ));
    }
    let mut score = 0.0;
    for i in 0..hops.len() {
        for j in i + 1..hops.len() {
            let r = hops[j] as f64 / hops[i] as f64;
            let dist = (r - r.round()).abs();
            let closeness = (1.0 - 2.0 * dist).max(0.0);
            score += closeness * closeness;
        }
    }
    Ok(score)
}

/// Grid search over progression ratios; returns `(ratio, score)` pairs
/// in grid order. Duplicate-collapsed plans with fewer than two sizes
/// score as infinitely harmonic.
pub fn plan_ratio_search(
    base_hop: usize,
    count: usize,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if steps < 2 || lo.is_nan() || lo <= 1.0 || hi.is_nan() || hi <= lo {
        return Err(AnalysisError::InvalidConfig("bad search grid".into()));
    }
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let ratio = lo + (hi - lo) * i as f64 / (steps - 1) as f64;
        let score = match fft_plan(base_hop, ratio, count) {
            Ok(plan) if plan.sizes().len() >= 2 => inharmonicity_score(&plan)?,
            _ => f64::INFINITY,
        };
        out.push((ratio, score));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Magnitude scaling and normalization caps
// ---------------------------------------------------------------------------

/// Library default for the spectral magnitude power law.
pub const DEFAULT_MAGNITUDE_POWER_ALPHA: f64 = 0.5;

/// Scales each complex bin by a power of its own magnitude,
/// `X <- X * |X|^alpha`, leaving phase untouched; zero stays zero.
/// Downweights low-magnitude bins relative to spectral peaks.
pub fn magnitude_power_scale(bins: &[Complex<f64>], alpha: f64) -> Vec<Complex<f64>> {
    bins.iter()
        .map(|&x| {
            let mag = x.norm();
            if mag == 0.0 {
                Complex::new(0.0, 0.0)
            } else {
                x * mag.powf(alpha)
            }
        })
        .collect()
}

/// Maximum amplification a normalization layer can apply when its
/// standard-deviation estimate is floored additively by `epsilon`:
/// `20 log10(1 / epsilon)` dB.
pub fn layernorm_gain_cap(epsilon: f64) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    20.0 * (1.0 / epsilon).log10()
}

// ---------------------------------------------------------------------------
// Sensitivity probing
// ---------------------------------------------------------------------------

/// Multi-resolution STFT L1 loss: the mean absolute magnitude
/// difference against a fixed reference, averaged over resolutions.
#[derive(Debug, Clone)]
pub struct MultiResL1 {
    pub resolutions: Vec<StftSpec>,
    pub reference: Vec<f64>,
}

impl MultiResL1 {
    pub fn new(plan: &FftPlan, reference: Vec<f64>) -> Result<Self, AnalysisError> {
        Ok(MultiResL1 {
            resolutions: plan.stft_specs()?,
            reference,
        })
    }

    /// Mean |magnitude - reference magnitude| over bins, averaged over
    /// resolutions.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, AnalysisError> {
        let mut total = 0.0;
        for spec in &self.resolutions {
            let xm = filterbank::stft_forward(x, spec)?;
            let rm = filterbank::stft_forward(&self.reference, spec)?;
            let mut acc = 0.0;
            let mut n = 0usize;
            for (fx, fr) in xm.frames.iter().zip(&rm.frames) {
                for (bx, br) in fx.iter().zip(fr) {
                    acc += (bx.norm() - br.norm()).abs();
                    n += 1;
                }
            }
            if n > 0 {
                total += acc / n as f64;
            }
        }
        Ok(total / self.resolutions.len() as f64)
    }
}

/// Time-frequency map of loss-gradient magnitudes over probe-STFT bins.
#[derive(Debug, Clone)]
pub struct SensitivityMap {
    /// `values[frame][bin]`, bins 0..=size/2 of the probe STFT.
    pub values: Vec<Vec<f64>>,
    pub probe: StftSpec,
    pub fd_step: f64,
}

impl SensitivityMap {
    /// Sum over frequency bins per probe frame.
    pub fn time_marginal(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| row.iter().sum::<f64>())
            .collect()
    }

    /// Peak-to-mean ratio of the time marginal, skipping `guard` frames
    /// at each end to avoid boundary effects.
    pub fn time_peak_to_mean(&self, guard: usize) -> f64 {
        let marginal = self.time_marginal();
        let interior = if marginal.len() > 2 * guard {
            &marginal[guard..marginal.len() - guard]
        } else {
            &marginal[..]
        };
        let mean = interior.iter().sum::<f64>() / interior.len().max(1) as f64;
        let peak = interior.iter().cloned().fold(0.0, f64::max);
        if mean > 0.0 {
            peak / mean
        } else {
            0.0
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|r| r.iter().cloned())
            .fold(0.0, f64::max)
    }
}

/// Estimates `|dL/dX[frame][bin]|` over the probe STFT of `signal` by
/// central finite differences: each bin is perturbed in its real and
/// imaginary direction (keeping the signal real via the conjugate
/// mirror bin), inverted, and pushed through the loss.
pub fn sensitivity_map(
    signal: &[f64],
    probe: &StftSpec,
    loss: &MultiResL1,
    fd_step: f64,
) -> Result<SensitivityMap, AnalysisError> {
    if fd_step.is_nan() || fd_step <= 0.0 {
        return Err(AnalysisError::InvalidConfig("fd_step must be positive".into()));
    }
    let size = probe.size;
    let hop = probe.hop;
    let half_bins = size / 2 + 1;
    let frames = filterbank::stft_forward(signal, probe)?;
    let baseline = filterbank::stft_inverse(&frames, probe)?;
    let num_frames = frames.num_frames();

    // overlap normalization of the inverse, so bin atoms can be patched
    // onto the baseline without re-running the full inverse
    let window = probe.window.build(size);
    let mut den = vec![0.0; baseline.len()];
    for m in 0..num_frames {
        for (n, &w) in window.iter().enumerate() {
            let t = m * hop + n;
            if t < den.len() {
                den[t] += w * w;
            }
        }
    }

    let jobs = num_frames * half_bins;
    let rows = par::map_indexed(jobs, |job| {
        let frame = job / half_bins;
        let bin = job % half_bins;
        let mirror = (size - bin) % size;
        let self_conjugate = mirror == bin;

        let mut grads = [0.0f64; 2];
        for (comp, grad) in grads.iter_mut().enumerate() {
            if comp == 1 && self_conjugate {
                // imaginary perturbation of a self-conjugate bin would
                // make the signal complex; gradient pinned to zero
                continue;
            }
            // time-domain atom of the perturbed bin pair, windowed and
            // normalized like the full inverse
            let mut plus = baseline.clone();
            let mut minus = baseline.clone();
            for n in 0..size {
                let t = frame * hop + n;
                if t >= plus.len() || den[t] <= 1e-12 {
                    continue;
                }
                let angle = 2.0 * std::f64::consts::PI * bin as f64 * n as f64 / size as f64;
                let basis = if comp == 0 {
                    if self_conjugate {
                        angle.cos()
                    } else {
                        2.0 * angle.cos()
                    }
                } else {
                    -2.0 * angle.sin()
                };
                let atom = basis / size as f64 * window[n] / den[t];
                plus[t] += fd_step * atom;
                minus[t] -= fd_step * atom;
            }
            let lp = loss.evaluate(&plus).expect("loss eval");
            let lm = loss.evaluate(&minus).expect("loss eval");
            *grad = (lp - lm) / (2.0 * fd_step);
        }
        (frame, bin, (grads[0] * grads[0] + grads[1] * grads[1]).sqrt())
    });

    let mut values = vec![vec![0.0; half_bins]; num_frames];
    for (frame, bin, s) in rows {
        values[frame][bin] = s;
    }
    Ok(SensitivityMap {
        values,
        probe: probe.clone(),
        fd_step,
    })
}
