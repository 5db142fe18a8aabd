//! Objective reconstruction metrics and composite loss formulas as pure
//! functions over signals and caller-supplied feature stacks.
//!
//! Spectral conventions, fixed for byte-stable reports: Hann window of
//! size 2048, FFT size 2048, hop 256 with 128 mel bins for the mel
//! distance, hop 512 for the linear STFT distance; 16 kHz audio; log
//! magnitudes are natural logs floored at 1e-5; mel filters are
//! triangular on the HTK mel scale, each normalized to unit weight sum.

use ndarray::Array2;

use crate::filterbank::{self, StftSpec, WindowKind};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("signals have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("reference is zero; metric undefined")]
    UndefinedReference,
    #[error("decay must lie in (0, 1], got {0}")]
    InvalidDecay(f64),
    #[error(transparent)]
    Filterbank(#[from] filterbank::FilterbankError),
}

/// Report cap for SI-SDR on (near-)identical signals.
pub const SI_SDR_CAP_DB: f64 = 300.0;

/// Log-magnitude floor for the spectral distances.
pub const LOG_FLOOR: f64 = 1e-5;

/// Assumed sample rate of the metric front end.
pub const SAMPLE_RATE: f64 = 16_000.0;

/// Mel bin count of the mel distance.
pub const MEL_BINS: usize = 128;

const FFT_SIZE: usize = 2048;
const MEL_HOP: usize = 256;
const STFT_HOP: usize = 512;

// ---------------------------------------------------------------------------
// SI-SDR
// ---------------------------------------------------------------------------

/// Scale-invariant source-to-distortion ratio in dB: the estimate is
/// projected onto the reference and the residual counted as distortion,
/// which cancels any positive rescaling of the estimate exactly.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64, MetricsError> {
    if reference.len() != estimate.len() {
        return Err(MetricsError::LengthMismatch(reference.len(), estimate.len()));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(MetricsError::UndefinedReference);
    }
    let dot: f64 = reference.iter().zip(estimate).map(|(r, e)| r * e).sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let noise_energy: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if noise_energy == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target_energy / noise_energy).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

// ---------------------------------------------------------------------------
// Spectral distances
// ---------------------------------------------------------------------------

/// Frobenius norm of the magnitude difference over the Frobenius norm of
/// the reference magnitudes.
pub fn spectral_convergence(
    ref_mag: &Array2<f64>,
    est_mag: &Array2<f64>,
) -> Result<f64, MetricsError> {
    if ref_mag.dim() != est_mag.dim() {
        return Err(MetricsError::ShapeError(format!(
            "{:?} vs {:?}",
            ref_mag.dim(),
            est_mag.dim()
        )));
    }
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    for (r, e) in ref_mag.iter().zip(est_mag.iter()) {
        let d = e - r;
        diff_sq += d * d;
        ref_sq += r * r;
    }
    if ref_sq == 0.0 {
        return Err(MetricsError::UndefinedReference);
    }
    Ok((diff_sq / ref_sq).sqrt())
}

/// Magnitude spectrogram (frames x size/2+1 bins) with the fixed Hann
/// front end.
pub fn magnitude_spectrogram(x: &[f64], hop: usize) -> Result<Array2<f64>, MetricsError> {
    let spec = StftSpec::new(FFT_SIZE, hop, WindowKind::Hann)?;
    let frames = filterbank::stft_forward(x, &spec)?;
    let bins = FFT_SIZE / 2 + 1;
    let mut out = Array2::zeros((frames.num_frames(), bins));
    for (m, frame) in frames.frames.iter().enumerate() {
        for k in 0..bins {
            out[(m, k)] = frame[k].norm();
        }
    }
    Ok(out)
}

/// HTK mel value of a frequency in Hz.
fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank (MEL_BINS x bins), each row normalized to
/// unit sum.
pub fn mel_filterbank(bins: usize, sample_rate: f64) -> Array2<f64> {
    let nyquist = sample_rate / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let points: Vec<f64> = (0..MEL_BINS + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (MEL_BINS + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((MEL_BINS, bins));
    for m in 0..MEL_BINS {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        let mut sum = 0.0;
        for k in 0..bins {
            let f = k as f64 * sample_rate / FFT_SIZE as f64;
            let w = if f >= lo && f <= center && center > lo {
                (f - lo) / (center - lo)
            } else if f > center && f <= hi && hi > center {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb[(m, k)] = w;
            sum += w;
        }
        if sum > 0.0 {
            for k in 0..bins {
                fb[(m, k)] /= sum;
            }
        }
    }
    fb
}

/// Mel magnitude spectrogram (frames x MEL_BINS).
pub fn mel_spectrogram(x: &[f64]) -> Result<Array2<f64>, MetricsError> {
    let mag = magnitude_spectrogram(x, MEL_HOP)?;
    let fb = mel_filterbank(mag.dim().1, SAMPLE_RATE);
    Ok(mag.dot(&fb.t()))
}

fn log_l1_plus_convergence(
    ref_mag: &Array2<f64>,
    est_mag: &Array2<f64>,
) -> Result<f64, MetricsError> {
    if ref_mag.dim() != est_mag.dim() {
        return Err(MetricsError::ShapeError(format!(
            "{:?} vs {:?}",
            ref_mag.dim(),
            est_mag.dim()
        )));
    }
    let n = ref_mag.len() as f64;
    let log_l1 = ref_mag
        .iter()
        .zip(est_mag.iter())
        .map(|(r, e)| (r.max(LOG_FLOOR).ln() - e.max(LOG_FLOOR).ln()).abs())
        .sum::<f64>()
        / n;
    let sc = spectral_convergence(ref_mag, est_mag)?;
    Ok(log_l1 + sc)
}

/// Equal-weighted sum of the L1 distance between log mel magnitudes and
/// the spectral convergence of the linear mel magnitudes.
pub fn mel_distance(reference: &[f64], estimate: &[f64]) -> Result<f64, MetricsError> {
    if reference.len() != estimate.len() {
        return Err(MetricsError::LengthMismatch(reference.len(), estimate.len()));
    }
    let rm = mel_spectrogram(reference)?;
    let em = mel_spectrogram(estimate)?;
    log_l1_plus_convergence(&rm, &em)
}

/// Same two components as [`mel_distance`] on the linear 2048-bin
/// spectrogram with hop 512.
pub fn stft_distance(reference: &[f64], estimate: &[f64]) -> Result<f64, MetricsError> {
    if reference.len() != estimate.len() {
        return Err(MetricsError::LengthMismatch(reference.len(), estimate.len()));
    }
    let rm = magnitude_spectrogram(reference, STFT_HOP)?;
    let em = magnitude_spectrogram(estimate, STFT_HOP)?;
    log_l1_plus_convergence(&rm, &em)
}

// ---------------------------------------------------------------------------
// Feature-matching losses
// ---------------------------------------------------------------------------

/// Per-layer features of one network applied to one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub layers: Vec<Array2<f64>>,
}

impl FeatureStack {
    pub fn new(layers: Vec<Array2<f64>>) -> Result<Self, MetricsError> {
        if layers.is_empty() {
            return Err(MetricsError::ShapeError("empty feature stack".into()));
        }
        for l in &layers {
            if l.iter().any(|v| !v.is_finite()) {
                return Err(MetricsError::ShapeError("non-finite feature".into()));
            }
        }
        Ok(FeatureStack { layers })
    }
}

fn l1_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn layer_term(r: &Array2<f64>, e: &Array2<f64>) -> Result<f64, MetricsError> {
    if r.dim() != e.dim() {
        return Err(MetricsError::ShapeError(format!(
            "{:?} vs {:?}",
            r.dim(),
            e.dim()
        )));
    }
    let normalizer = l1_norm(r);
    if normalizer == 0.0 {
        return Err(MetricsError::UndefinedReference);
    }
    let diff: f64 = r.iter().zip(e.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(diff / normalizer)
}

/// Normalized feature-matching L1 loss: the mean over stacks and layers
/// of `||D - Dhat||_1 / ||D||_1`. With a single example the batch mean
/// of the normalizer is the example's own L1 norm, so per-layer positive
/// rescaling applied to both sides cancels.
pub fn feature_matching_loss(
    ref_stacks: &[FeatureStack],
    est_stacks: &[FeatureStack],
) -> Result<f64, MetricsError> {
    if ref_stacks.is_empty() || ref_stacks.len() != est_stacks.len() {
        return Err(MetricsError::ShapeError(format!(
            "{} reference stacks vs {} estimate stacks",
            ref_stacks.len(),
            est_stacks.len()
        )));
    }
    let mut total = 0.0;
    for (rs, es) in ref_stacks.iter().zip(est_stacks) {
        if rs.layers.len() != es.layers.len() {
            return Err(MetricsError::ShapeError(format!(
                "{} layers vs {}",
                rs.layers.len(),
                es.layers.len()
            )));
        }
        let mut stack_total = 0.0;
        for (r, e) in rs.layers.iter().zip(&es.layers) {
            stack_total += layer_term(r, e)?;
        }
        total += stack_total / rs.layers.len() as f64;
    }
    Ok(total / ref_stacks.len() as f64)
}

/// Single-network variant of the feature-matching loss, used for
/// perceptual features: the mean over layers of `||C - Chat||_1 /
/// ||C||_1`.
pub fn perceptual_loss(
    ref_stack: &FeatureStack,
    est_stack: &FeatureStack,
) -> Result<f64, MetricsError> {
    feature_matching_loss(
        std::slice::from_ref(ref_stack),
        std::slice::from_ref(est_stack),
    )
}

fn l1_mean(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::ShapeError("empty signal".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Early-training loss: feature matching plus exponentially decaying
/// waveform and spectral L1 terms,
/// `L_disc + gamma^step * (L1(x, xhat) + L1(|X|, |Xhat|))`.
pub fn pretrain_loss(
    x: &[f64],
    xhat: &[f64],
    step: u64,
    gamma: f64,
    disc_ref: &[FeatureStack],
    disc_est: &[FeatureStack],
) -> Result<f64, MetricsError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(MetricsError::InvalidDecay(gamma));
    }
    let disc = feature_matching_loss(disc_ref, disc_est)?;
    let decay = gamma.powf(step as f64);
    let wave_l1 = l1_mean(x, xhat)?;
    let xm = magnitude_spectrogram(x, STFT_HOP)?;
    let xhm = magnitude_spectrogram(xhat, STFT_HOP)?;
    let spec_l1 = xm
        .iter()
        .zip(xhm.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / xm.len() as f64;
    Ok(disc + decay * wave_l1 + decay * spec_l1)
}

/// Late-training loss: feature matching plus the perceptual
/// feature-matching term.
pub fn finetune_loss(
    disc_ref: &[FeatureStack],
    disc_est: &[FeatureStack],
    perc_ref: &FeatureStack,
    perc_est: &FeatureStack,
) -> Result<f64, MetricsError> {
    Ok(feature_matching_loss(disc_ref, disc_est)? + perceptual_loss(perc_ref, perc_est)?)
}

// ---------------------------------------------------------------------------
// Combined report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub si_sdr_db: f64,
    pub mel_distance: f64,
    pub stft_distance: f64,
}

pub fn metric_report(reference: &[f64], estimate: &[f64]) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        si_sdr_db: si_sdr(reference, estimate)?,
        mel_distance: mel_distance(reference, estimate)?,
        stft_distance: stft_distance(reference, estimate)?,
    })
}
