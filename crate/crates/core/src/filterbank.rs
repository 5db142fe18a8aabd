//! Time-frequency transforms with measured round-trip behaviour.
//!
//! Four families cover the design space for a codec front end: the
//! patched/polyphase transform (exact reconstruction, critically
//! sampled), windowed STFT (invertible under an overlap-add condition),
//! MDCT with a sine window (critically sampled, reconstruction by
//! time-domain aliasing cancellation) and a cosine-modulated PQMF bank
//! (critically sampled, near-perfect reconstruction).
//!
//! Padding policy everywhere: right-pad with zeros to a frame boundary;
//! inverses truncate back to the original length.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FilterbankError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("window/hop fails the overlap-add condition; transform not invertible")]
    NonInvertibleConfig,
    #[error("frame matrix shape {got:?} does not match spec (frames x {expected})")]
    ShapeMismatch { expected: usize, got: (usize, usize) },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rectangular,
    Hann,
}

impl WindowKind {
    pub fn sample(&self, n: usize, size: usize) -> f64 {
        match self {
            WindowKind::Rectangular => 1.0,
            // periodic Hann
            WindowKind::Hann => {
                0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / size as f64).cos())
            }
        }
    }

    pub fn build(&self, size: usize) -> Vec<f64> {
        (0..size).map(|n| self.sample(n, size)).collect()
    }
}

/// Real (patch, MDCT, PQMF) or complex (STFT) frame-major coefficients,
/// with the original signal length retained for inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix<T> {
    pub frames: Vec<Vec<T>>,
    pub original_len: usize,
}

impl<T> FrameMatrix<T> {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn channels(&self) -> usize {
        self.frames.first().map(|f| f.len()).unwrap_or(0)
    }
}

fn pad_to_multiple(x: &[f64], chunk: usize) -> Vec<f64> {
    let padded_len = x.len().div_ceil(chunk).max(1) * chunk;
    let mut out = x.to_vec();
    out.resize(padded_len, 0.0);
    out
}

// ---------------------------------------------------------------------------
// Patched / polyphase transform
// ---------------------------------------------------------------------------

/// Reshapes the signal into non-overlapping length-`patch` frames.
pub fn patch_forward(x: &[f64], patch: usize) -> Result<FrameMatrix<f64>, FilterbankError> {
    if patch == 0 {
        return Err(FilterbankError::InvalidConfig("patch size 0".into()));
    }
    let padded = pad_to_multiple(x, patch);
    let frames = padded.chunks(patch).map(|c| c.to_vec()).collect();
    Ok(FrameMatrix {
        frames,
        original_len: x.len(),
    })
}

/// Exact inverse of [`patch_forward`]; truncates to the original length.
pub fn patch_inverse(fm: &FrameMatrix<f64>, patch: usize) -> Result<Vec<f64>, FilterbankError> {
    let mut out = Vec::with_capacity(fm.num_frames() * patch);
    for frame in &fm.frames {
        if frame.len() != patch {
            return Err(FilterbankError::ShapeMismatch {
                expected: patch,
                got: (fm.num_frames(), frame.len()),
            });
        }
        out.extend_from_slice(frame);
    }
    out.truncate(fm.original_len);
    Ok(out)
}

// ---------------------------------------------------------------------------
// STFT
// ---------------------------------------------------------------------------

/// Windowed DFT configuration. Construction checks that the squared
/// window overlap-add stays bounded away from zero, which is what
/// inversion by synthesis-window normalization needs.
#[derive(Debug, Clone, PartialEq)]
pub struct StftSpec {
    pub size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl StftSpec {
    pub fn new(size: usize, hop: usize, window: WindowKind) -> Result<Self, FilterbankError> {
        if size == 0 || hop == 0 {
            return Err(FilterbankError::InvalidConfig(
                "size and hop must be positive".into(),
            ));
        }
        if hop > size {
            return Err(FilterbankError::InvalidConfig(format!(
                "hop {hop} exceeds size {size}"
            )));
        }
        let spec = StftSpec { size, hop, window };
        spec.check_overlap_add()?;
        Ok(spec)
    }

    /// Steady-state overlap-add of the squared window, one value per
    /// in-hop offset.
    fn squared_overlap(&self) -> Vec<f64> {
        let w = self.window.build(self.size);
        let mut sums = vec![0.0; self.hop];
        for (n, &wn) in w.iter().enumerate() {
            sums[n % self.hop] += wn * wn;
        }
        sums
    }

    fn check_overlap_add(&self) -> Result<(), FilterbankError> {
        let sums = self.squared_overlap();
        let max = sums.iter().cloned().fold(0.0, f64::max);
        let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
        if max <= 0.0 || min < 1e-6 * max {
            return Err(FilterbankError::NonInvertibleConfig);
        }
        Ok(())
    }

    /// Maximum relative deviation of the squared-window overlap-add from
    /// its mean; 0 for exactly constant overlap-add.
    pub fn overlap_add_deviation(&self) -> f64 {
        let sums = self.squared_overlap();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        sums.iter()
            .map(|s| (s - mean).abs() / mean)
            .fold(0.0, f64::max)
    }
}

/// Windowed DFT frames (full complex spectrum, unnormalized forward).
pub fn stft_forward(
    x: &[f64],
    spec: &StftSpec,
) -> Result<FrameMatrix<Complex<f64>>, FilterbankError> {
    let size = spec.size;
    let hop = spec.hop;
    // pad so the last frame is complete
    let padded_len = if x.len() <= size {
        size
    } else {
        size + (x.len() - size).div_ceil(hop) * hop
    };
    let mut padded = x.to_vec();
    padded.resize(padded_len, 0.0);

    let window = spec.window.build(size);
    let fft = FftPlanner::new().plan_fft_forward(size);
    let num_frames = (padded_len - size) / hop + 1;
    let mut frames = Vec::with_capacity(num_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for m in 0..num_frames {
        for (n, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[m * hop + n] * window[n], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf.clone());
    }
    Ok(FrameMatrix {
        frames,
        original_len: x.len(),
    })
}

/// Overlap-add inversion with synthesis-window/overlap normalization.
pub fn stft_inverse(
    fm: &FrameMatrix<Complex<f64>>,
    spec: &StftSpec,
) -> Result<Vec<f64>, FilterbankError> {
    let size = spec.size;
    let hop = spec.hop;
    for frame in &fm.frames {
        if frame.len() != size {
            return Err(FilterbankError::ShapeMismatch {
                expected: size,
                got: (fm.num_frames(), frame.len()),
            });
        }
    }
    let window = spec.window.build(size);
    let total = if fm.frames.is_empty() {
        0
    } else {
        (fm.num_frames() - 1) * hop + size
    };
    let mut acc = vec![0.0; total];
    let mut den = vec![0.0; total];
    let ifft = FftPlanner::new().plan_fft_inverse(size);
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for (m, frame) in fm.frames.iter().enumerate() {
        buf.copy_from_slice(frame);
        ifft.process(&mut buf);
        for (n, b) in buf.iter().enumerate() {
            // rustfft inverse is unnormalized
            let y = b.re / size as f64;
            acc[m * hop + n] += window[n] * y;
            den[m * hop + n] += window[n] * window[n];
        }
    }
    let mut out: Vec<f64> = acc
        .iter()
        .zip(&den)
        .map(|(&a, &d)| if d > 1e-12 { a / d } else { 0.0 })
        .collect();
    out.truncate(fm.original_len);
    out.resize(fm.original_len, 0.0);
    Ok(out)
}

/// Sample range fully covered by steady-state window overlap, where the
/// inversion is exact.
pub fn stft_interior(spec: &StftSpec, len: usize) -> (usize, usize) {
    let lead = spec.size.saturating_sub(spec.hop);
    (lead.min(len), len.saturating_sub(lead))
}

// ---------------------------------------------------------------------------
// MDCT
// ---------------------------------------------------------------------------

/// MDCT cosine kernel: `cos(pi/M * (n + 1/2 + M/2) * (k + 1/2))`.
fn mdct_kernel(m: usize, n: usize, k: usize) -> f64 {
    let mf = m as f64;
    (std::f64::consts::PI / mf * (n as f64 + 0.5 + mf / 2.0) * (k as f64 + 0.5)).cos()
}

/// Princen-Bradley sine window over a length-`2M` block.
fn sine_window(two_m: usize) -> Vec<f64> {
    (0..two_m)
        .map(|n| (std::f64::consts::PI * (n as f64 + 0.5) / two_m as f64).sin())
        .collect()
}

/// MDCT with a sine window: blocks of `size` samples, hop `size/2`,
/// `size/2` coefficients per frame.
pub fn mdct_forward(x: &[f64], size: usize) -> Result<FrameMatrix<f64>, FilterbankError> {
    if size == 0 || !size.is_multiple_of(2) {
        return Err(FilterbankError::InvalidConfig(format!(
            "MDCT size must be even and positive, got {size}"
        )));
    }
    let m = size / 2;
    let padded = pad_to_multiple(x, m);
    // frames advance by half a block; the trailing half-frame sees zeros
    let num_frames = padded.len() / m;
    let mut padded2 = padded;
    padded2.resize((num_frames + 1) * m, 0.0);

    let window = sine_window(size);
    let mut frames = Vec::with_capacity(num_frames);
    for f in 0..num_frames {
        let block = &padded2[f * m..f * m + size];
        let mut coeffs = vec![0.0; m];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (n, &b) in block.iter().enumerate() {
                acc += b * window[n] * mdct_kernel(m, n, k);
            }
            *c = acc;
        }
        frames.push(coeffs);
    }
    Ok(FrameMatrix {
        frames,
        original_len: x.len(),
    })
}

/// Inverse MDCT: per-frame expansion, synthesis windowing and
/// overlap-add; aliasing cancels between adjacent frames.
pub fn mdct_inverse(fm: &FrameMatrix<f64>, size: usize) -> Result<Vec<f64>, FilterbankError> {
    if size == 0 || !size.is_multiple_of(2) {
        return Err(FilterbankError::InvalidConfig(format!(
            "MDCT size must be even and positive, got {size}"
        )));
    }
    let m = size / 2;
    for frame in &fm.frames {
        if frame.len() != m {
            return Err(FilterbankError::ShapeMismatch {
                expected: m,
                got: (fm.num_frames(), frame.len()),
            });
        }
    }
    let window = sine_window(size);
    let total = (fm.num_frames() + 1) * m;
    let mut acc = vec![0.0; total];
    for (f, coeffs) in fm.frames.iter().enumerate() {
        for n in 0..size {
            let mut y = 0.0;
            for (k, &c) in coeffs.iter().enumerate() {
                y += c * mdct_kernel(m, n, k);
            }
            acc[f * m + n] += window[n] * y * 2.0 / m as f64;
        }
    }
    acc.truncate(fm.original_len);
    acc.resize(fm.original_len, 0.0);
    Ok(acc)
}

/// Interior where both overlapping blocks exist and aliasing cancels.
pub fn mdct_interior(size: usize, len: usize) -> (usize, usize) {
    let m = size / 2;
    (m.min(len), len.saturating_sub(m))
}

// ---------------------------------------------------------------------------
// PQMF
// ---------------------------------------------------------------------------

/// Cosine-modulated pseudo-QMF bank configuration. The prototype is a
/// Kaiser-window lowpass; its length defaults to `64 * channels` taps
/// and its cutoff is tuned at construction for the flattest round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct PqmfSpec {
    pub channels: usize,
    pub prototype_len: usize,
    pub attenuation_db: f64,
}

impl PqmfSpec {
    pub fn new(channels: usize) -> Result<Self, FilterbankError> {
        PqmfSpec::with_prototype(channels, 64 * channels, 100.0)
    }

    pub fn with_prototype(
        channels: usize,
        prototype_len: usize,
        attenuation_db: f64,
    ) -> Result<Self, FilterbankError> {
        if channels < 2 {
            return Err(FilterbankError::InvalidConfig(format!(
                "PQMF needs at least 2 channels, got {channels}"
            )));
        }
        if prototype_len == 0 || !prototype_len.is_multiple_of(channels) {
            return Err(FilterbankError::InvalidConfig(format!(
                "prototype length {prototype_len} must be a positive multiple of {channels}"
            )));
        }
        Ok(PqmfSpec {
            channels,
            prototype_len,
            attenuation_db,
        })
    }
}

/// Zeroth-order modified Bessel function, for the Kaiser window.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_sq = x * x / 4.0;
    for k in 1..64 {
        term *= half_sq / (k * k) as f64;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

fn kaiser_lowpass(len: usize, cutoff: f64, beta: f64) -> Vec<f64> {
    let center = (len - 1) as f64 / 2.0;
    let i0_beta = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let t = n as f64 - center;
            let sinc = if t.abs() < 1e-12 {
                cutoff / std::f64::consts::PI
            } else {
                (cutoff * t).sin() / (std::f64::consts::PI * t)
            };
            let r = 2.0 * (n as f64) / (len - 1) as f64 - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            sinc * kaiser
        })
        .collect()
}

/// Analysis/synthesis filter pair built from one prototype.
#[derive(Debug, Clone)]
pub struct PqmfBank {
    spec: PqmfSpec,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
    /// Least-squares synthesis gain fitted during the prototype search.
    gain: f64,
}

impl PqmfBank {
    pub fn new(spec: &PqmfSpec) -> Result<Self, FilterbankError> {
        // Kaiser beta for the requested stopband attenuation
        let a = spec.attenuation_db;
        let beta = if a > 50.0 {
            0.1102 * (a - 8.7)
        } else if a >= 21.0 {
            0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
        } else {
            0.0
        };
        let k = spec.channels as f64;
        // tune the cutoff so the prototype autocorrelation vanishes at
        // multiples of 2K (the M-th band condition); that makes the
        // channel responses power-complementary and cancels adjacent
        // aliasing. The optimum sits near the half-band point pi/(2K).
        let base = std::f64::consts::PI / (2.0 * k);
        let mut best = (f64::INFINITY, base);
        let mut lo = 0.5 * base;
        let mut hi = 1.4 * base;
        for _ in 0..6 {
            let steps = 16;
            for i in 0..=steps {
                let cutoff = lo + (hi - lo) * i as f64 / steps as f64;
                let proto = kaiser_lowpass(spec.prototype_len, cutoff, beta);
                let err = nyquist_band_loss(&proto, spec.channels);
                if err < best.0 {
                    best = (err, cutoff);
                }
            }
            let span = (hi - lo) / steps as f64;
            lo = (best.1 - 1.5 * span).max(0.05 * base);
            hi = best.1 + 1.5 * span;
        }
        let prototype = kaiser_lowpass(spec.prototype_len, best.1, beta);
        let (_, gain) = chain_error(&prototype, spec.channels);
        let (analysis, synthesis) = modulate(&prototype, spec.channels);
        Ok(PqmfBank {
            spec: spec.clone(),
            analysis,
            synthesis,
            gain,
        })
    }

    pub fn spec(&self) -> &PqmfSpec {
        &self.spec
    }

    /// Group delay of the analysis+synthesis chain in samples.
    pub fn delay(&self) -> usize {
        self.spec.prototype_len - 1
    }

    /// Splits the signal into `channels` critically sampled subbands;
    /// one frame holds one sample of every channel.
    pub fn forward(&self, x: &[f64]) -> Result<FrameMatrix<f64>, FilterbankError> {
        let padded = pad_to_multiple(x, self.spec.channels);
        let frames = analyze(&padded, &self.analysis, self.spec.channels);
        Ok(FrameMatrix {
            frames,
            original_len: x.len(),
        })
    }

    /// Upsamples, filters and sums the subbands; compensates the filter
    /// delay and truncates to the original length.
    pub fn inverse(&self, fm: &FrameMatrix<f64>) -> Result<Vec<f64>, FilterbankError> {
        let k = self.spec.channels;
        for frame in &fm.frames {
            if frame.len() != k {
                return Err(FilterbankError::ShapeMismatch {
                    expected: k,
                    got: (fm.num_frames(), frame.len()),
                });
            }
        }
        let mut out = synthesize(&fm.frames, &self.synthesis, k, self.gain, self.delay());
        out.truncate(fm.original_len);
        out.resize(fm.original_len, 0.0);
        Ok(out)
    }
}

/// Subband decomposition: filter then decimate by the channel count.
fn analyze(x: &[f64], analysis: &[Vec<f64>], channels: usize) -> Vec<Vec<f64>> {
    let num_frames = x.len() / channels;
    let mut frames = vec![vec![0.0; channels]; num_frames];
    for (ch, filter) in analysis.iter().enumerate() {
        for (m, frame) in frames.iter_mut().enumerate() {
            let t = m * channels;
            let mut acc = 0.0;
            let taps = filter.len().min(t + 1);
            for (n, &h) in filter.iter().take(taps).enumerate() {
                acc += h * x[t - n];
            }
            frame[ch] = acc;
        }
    }
    frames
}

/// Upsample, filter, sum and delay-compensate; output has
/// `frames * channels` samples.
fn synthesize(
    frames: &[Vec<f64>],
    synthesis: &[Vec<f64>],
    channels: usize,
    gain: f64,
    delay: usize,
) -> Vec<f64> {
    let proto_len = synthesis.first().map(|f| f.len()).unwrap_or(0);
    let total = frames.len() * channels + proto_len;
    let mut acc = vec![0.0; total];
    let scale = gain * channels as f64;
    for (ch, filter) in synthesis.iter().enumerate() {
        for (m, frame) in frames.iter().enumerate() {
            let v = frame[ch] * scale;
            if v == 0.0 {
                continue;
            }
            let t0 = m * channels;
            for (n, &g) in filter.iter().enumerate() {
                acc[t0 + n] += g * v;
            }
        }
    }
    acc.into_iter().skip(delay).collect()
}

/// Normalized prototype autocorrelation magnitude at nonzero multiples
/// of `2 * channels`; zero for a perfect M-th band (Nyquist) filter.
fn nyquist_band_loss(prototype: &[f64], channels: usize) -> f64 {
    let len = prototype.len();
    let r0: f64 = prototype.iter().map(|v| v * v).sum();
    let step = 2 * channels;
    let mut worst = 0.0f64;
    let mut lag = step;
    while lag < len {
        let mut r = 0.0;
        for n in 0..len - lag {
            r += prototype[n] * prototype[n + lag];
        }
        worst = worst.max((r / r0).abs());
        lag += step;
    }
    worst
}

/// Round-trip error of the full chain measured on one impulse per
/// polyphase offset, with the least-squares gain fitted jointly.
/// Returns (residual error, gain).
fn chain_error(prototype: &[f64], channels: usize) -> (f64, f64) {
    let len = prototype.len();
    let delay = len - 1;
    let (analysis, synthesis) = modulate(prototype, channels);
    let sig_len = 4 * len.max(channels);
    let mut xy = 0.0;
    let mut yy = 0.0;
    let mut responses = Vec::with_capacity(channels);
    for p in 0..channels {
        let t0 = 2 * len + p;
        let mut x = vec![0.0; sig_len];
        x[t0] = 1.0;
        let frames = analyze(&x, &analysis, channels);
        let y = synthesize(&frames, &synthesis, channels, 1.0, delay);
        let n = x.len().min(y.len());
        for t in 0..n {
            xy += x[t] * y[t];
            yy += y[t] * y[t];
        }
        responses.push((x, y));
    }
    if yy == 0.0 {
        return (f64::INFINITY, 1.0);
    }
    // balance broadband ripple against the band-edge (DC) response: the
    // least-squares gain parks the residual bump entirely at DC, so
    // search the gain for the smallest worst case of the two
    let g_broadband = xy / yy;
    let dcs: Vec<f64> = responses.iter().map(|(_, y)| y.iter().sum()).collect();
    let objective = |g: f64| -> f64 {
        let mut err_sq = 0.0;
        let mut ref_sq = 0.0;
        for (x, y) in &responses {
            let n = x.len().min(y.len());
            for t in 0..n {
                let d = g * y[t] - x[t];
                err_sq += d * d;
                ref_sq += x[t] * x[t];
            }
        }
        let broadband = (err_sq / ref_sq).sqrt();
        let dc = dcs
            .iter()
            .map(|&d| (g * d - 1.0).abs())
            .fold(0.0, f64::max);
        broadband.max(dc)
    };
    let g_dc = dcs.iter().sum::<f64>() / dcs.iter().map(|d| d * d).sum::<f64>().max(1e-300);
    let mut best = (objective(g_broadband), g_broadband);
    let (mut lo, mut hi) = (g_broadband.min(g_dc), g_broadband.max(g_dc));
    for _ in 0..3 {
        let steps = 16;
        for i in 0..=steps {
            let g = lo + (hi - lo) * i as f64 / steps as f64;
            let e = objective(g);
            if e < best.0 {
                best = (e, g);
            }
        }
        let span = (hi - lo) / steps as f64;
        lo = best.1 - span;
        hi = best.1 + span;
    }
    let (err, gain) = best;
    (err, gain)
}

fn modulate(prototype: &[f64], channels: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let len = prototype.len();
    let center = (len - 1) as f64 / 2.0;
    let k = channels as f64;
    let mut analysis = Vec::with_capacity(channels);
    let mut synthesis = Vec::with_capacity(channels);
    for ch in 0..channels {
        let phase = if ch % 2 == 0 {
            std::f64::consts::FRAC_PI_4
        } else {
            -std::f64::consts::FRAC_PI_4
        };
        let mut h = Vec::with_capacity(len);
        let mut g = Vec::with_capacity(len);
        for (n, &p) in prototype.iter().enumerate() {
            let arg = std::f64::consts::PI / k * (ch as f64 + 0.5) * (n as f64 - center);
            h.push(2.0 * p * (arg + phase).cos());
            g.push(2.0 * p * (arg - phase).cos());
        }
        analysis.push(h);
        synthesis.push(g);
    }
    (analysis, synthesis)
}

// ---------------------------------------------------------------------------
// Round-trip reporting
// ---------------------------------------------------------------------------

/// One transform family with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterbankSpec {
    Patch { size: usize },
    Stft(StftSpec),
    Mdct { size: usize },
    Pqmf(PqmfSpec),
}

/// Forward/backward error metrics for a spec applied to a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripReport {
    /// `||xhat - x||_2 / ||x||_2` over the interior region.
    pub relative_l2: f64,
    /// Same, in dB (`20 log10`); `-inf` for an exact round trip.
    pub error_db: f64,
    pub max_abs_error: f64,
    /// Transform output values per input sample; 1 = critically sampled.
    pub critical_sampling_ratio: f64,
    /// Interior sample range the errors were measured over.
    pub interior: (usize, usize),
}

fn error_metrics(x: &[f64], y: &[f64], interior: (usize, usize)) -> (f64, f64, f64) {
    let (a, b) = interior;
    let mut err_sq = 0.0;
    let mut ref_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for t in a..b.min(x.len()) {
        let e = y[t] - x[t];
        err_sq += e * e;
        ref_sq += x[t] * x[t];
        max_abs = max_abs.max(e.abs());
    }
    let rel = if ref_sq > 0.0 {
        (err_sq / ref_sq).sqrt()
    } else if err_sq > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let db = if rel > 0.0 {
        20.0 * rel.log10()
    } else {
        f64::NEG_INFINITY
    };
    (rel, db, max_abs)
}

/// Runs a forward/inverse round trip and reports reconstruction error
/// plus the critical-sampling ratio.
pub fn roundtrip_report(
    x: &[f64],
    spec: &FilterbankSpec,
) -> Result<RoundtripReport, FilterbankError> {
    match spec {
        FilterbankSpec::Patch { size } => {
            let fm = patch_forward(x, *size)?;
            let y = patch_inverse(&fm, *size)?;
            let (rel, db, max_abs) = error_metrics(x, &y, (0, x.len()));
            Ok(RoundtripReport {
                relative_l2: rel,
                error_db: db,
                max_abs_error: max_abs,
                critical_sampling_ratio: 1.0,
                interior: (0, x.len()),
            })
        }
        FilterbankSpec::Stft(s) => {
            let fm = stft_forward(x, s)?;
            let y = stft_inverse(&fm, s)?;
            let interior = stft_interior(s, x.len());
            let (rel, db, max_abs) = error_metrics(x, &y, interior);
            Ok(RoundtripReport {
                relative_l2: rel,
                error_db: db,
                max_abs_error: max_abs,
                critical_sampling_ratio: s.size as f64 / s.hop as f64,
                interior,
            })
        }
        FilterbankSpec::Mdct { size } => {
            let fm = mdct_forward(x, *size)?;
            let y = mdct_inverse(&fm, *size)?;
            let interior = mdct_interior(*size, x.len());
            let (rel, db, max_abs) = error_metrics(x, &y, interior);
            Ok(RoundtripReport {
                relative_l2: rel,
                error_db: db,
                max_abs_error: max_abs,
                critical_sampling_ratio: 1.0,
                interior,
            })
        }
        FilterbankSpec::Pqmf(s) => {
            let bank = PqmfBank::new(s)?;
            let fm = bank.forward(x)?;
            let y = bank.inverse(&fm)?;
            let margin = s.prototype_len;
            let interior = (margin.min(x.len()), x.len().saturating_sub(margin));
            let (rel, db, max_abs) = error_metrics(x, &y, interior);
            Ok(RoundtripReport {
                relative_l2: rel,
                error_db: db,
                max_abs_error: max_abs,
                critical_sampling_ratio: 1.0,
                interior,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn patch_shapes_and_exact_roundtrip() {
        let x = noise(16_000, 1);
        let fm = patch_forward(&x, 320).unwrap();
        assert_eq!(fm.num_frames(), 50);
        assert_eq!(fm.channels(), 320);

        let x = noise(81_920, 2);
        let fm = patch_forward(&x, 320).unwrap();
        assert_eq!(patch_inverse(&fm, 320).unwrap(), x);

        let x = noise(100, 3);
        let fm = patch_forward(&x, 320).unwrap();
        assert_eq!(fm.num_frames(), 1);
        let y = patch_inverse(&fm, 320).unwrap();
        assert_eq!(y.len(), 100);
        assert_eq!(y, x);
    }

    #[test]
    fn stft_hann_roundtrip_is_tight() {
        let spec = StftSpec::new(2048, 512, WindowKind::Hann).unwrap();
        let x = noise(16_384, 4);
        let report = roundtrip_report(&x, &FilterbankSpec::Stft(spec)).unwrap();
        assert!(report.relative_l2 <= 1e-10, "rel={}", report.relative_l2);
        assert_eq!(report.critical_sampling_ratio, 4.0);
    }

    #[test]
    fn stft_rectangular_critical_is_exact() {
        let spec = StftSpec::new(512, 512, WindowKind::Rectangular).unwrap();
        let x = noise(4096, 5);
        let report = roundtrip_report(&x, &FilterbankSpec::Stft(spec)).unwrap();
        assert!(report.relative_l2 <= 1e-13, "rel={}", report.relative_l2);
        assert_eq!(report.critical_sampling_ratio, 1.0);
    }

    #[test]
    fn stft_hann_without_overlap_is_rejected() {
        assert_eq!(
            StftSpec::new(512, 512, WindowKind::Hann).unwrap_err(),
            FilterbankError::NonInvertibleConfig
        );
    }

    #[test]
    fn mdct_interior_roundtrip() {
        let x = noise(8192, 6);
        let fm = mdct_forward(&x, 512).unwrap();
        assert_eq!(fm.channels(), 256);
        let y = mdct_inverse(&fm, 512).unwrap();
        let (rel, _, _) = error_metrics(&x, &y, mdct_interior(512, x.len()));
        assert!(rel <= 1e-10, "rel={rel}");

        // constant signal
        let x = vec![0.25; 4096];
        let fm = mdct_forward(&x, 512).unwrap();
        let y = mdct_inverse(&fm, 512).unwrap();
        let (a, b) = mdct_interior(512, x.len());
        for t in a..b {
            assert!((y[t] - 0.25).abs() < 1e-10);
        }

        assert!(mdct_forward(&x, 511).is_err());
    }

    #[test]
    fn mdct_coefficient_perturbation_spans_two_frames() {
        let x = noise(4096, 7);
        let size = 512;
        let m = size / 2;
        let fm = mdct_forward(&x, size).unwrap();
        let mut fm2 = fm.clone();
        let target = 6; // interior frame
        fm2.frames[target][10] += 1.0;
        let y1 = mdct_inverse(&fm, size).unwrap();
        let y2 = mdct_inverse(&fm2, size).unwrap();
        // the block of frame f covers samples [f*m, f*m + 2m), i.e. the
        // two frames overlapping it
        let lo = target * m;
        let hi = target * m + size;
        for t in 0..x.len() {
            let d = (y2[t] - y1[t]).abs();
            if t < lo || t >= hi {
                assert!(d < 1e-12, "leak {d} at {t}");
            }
        }
        let inside: f64 = (lo..hi).map(|t| (y2[t] - y1[t]).abs()).sum();
        assert!(inside > 0.1);
    }

    #[test]
    fn pqmf_default_design_is_near_pr() {
        let spec = PqmfSpec::new(4).unwrap();
        let x = noise(8192, 8);
        let report = roundtrip_report(&x, &FilterbankSpec::Pqmf(spec.clone())).unwrap();
        assert!(report.error_db <= -60.0, "err={} dB", report.error_db);
        assert_eq!(report.critical_sampling_ratio, 1.0);

        // DC input reconstructs within the same bound
        let x = vec![0.5; 8192];
        let report = roundtrip_report(&x, &FilterbankSpec::Pqmf(spec)).unwrap();
        assert!(report.error_db <= -60.0, "DC err={} dB", report.error_db);
    }

    #[test]
    fn pqmf_is_critically_sampled() {
        let spec = PqmfSpec::new(4).unwrap();
        let bank = PqmfBank::new(&spec).unwrap();
        let x = noise(4096, 9);
        let fm = bank.forward(&x).unwrap();
        assert_eq!(fm.num_frames() * fm.channels(), x.len());
    }

    #[test]
    fn pqmf_rejects_bad_prototype() {
        assert!(PqmfSpec::with_prototype(4, 0, 100.0).is_err());
        assert!(PqmfSpec::with_prototype(4, 130, 100.0).is_err());
        assert!(PqmfSpec::new(1).is_err());
    }

    #[test]
    fn all_families_are_linear() {
        let x = noise(4096, 10);
        let y = noise(4096, 11);
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(&xi, &yi)| a * xi + b * yi).collect();

        // patch
        let fx = patch_forward(&x, 128).unwrap();
        let fy = patch_forward(&y, 128).unwrap();
        let fc = patch_forward(&combo, 128).unwrap();
        for f in 0..fc.num_frames() {
            for c in 0..128 {
                let lhs = fc.frames[f][c];
                let rhs = a * fx.frames[f][c] + b * fy.frames[f][c];
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        // stft
        let spec = StftSpec::new(256, 64, WindowKind::Hann).unwrap();
        let fx = stft_forward(&x, &spec).unwrap();
        let fy = stft_forward(&y, &spec).unwrap();
        let fc = stft_forward(&combo, &spec).unwrap();
        for f in 0..fc.num_frames() {
            for c in 0..256 {
                let lhs = fc.frames[f][c];
                let rhs = fx.frames[f][c] * a + fy.frames[f][c] * b;
                assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
            }
        }

        // mdct
        let fx = mdct_forward(&x, 256).unwrap();
        let fy = mdct_forward(&y, 256).unwrap();
        let fc = mdct_forward(&combo, 256).unwrap();
        for f in 0..fc.num_frames() {
            for c in 0..128 {
                let lhs = fc.frames[f][c];
                let rhs = a * fx.frames[f][c] + b * fy.frames[f][c];
                assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
            }
        }

        // pqmf
        let bank = PqmfBank::new(&PqmfSpec::new(4).unwrap()).unwrap();
        let fx = bank.forward(&x).unwrap();
        let fy = bank.forward(&y).unwrap();
        let fc = bank.forward(&combo).unwrap();
        for f in 0..fc.num_frames() {
            for c in 0..4 {
                let lhs = fc.frames[f][c];
                let rhs = a * fx.frames[f][c] + b * fy.frames[f][c];
                assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn stft_energy_matches_parseval_with_overlap_constant() {
        let spec = StftSpec::new(512, 128, WindowKind::Hann).unwrap();
        // signal supported away from the edges so every sample sees the
        // steady-state overlap
        let mut x = vec![0.0; 8192];
        let inner = noise(8192 - 2 * 512, 12);
        x[512..8192 - 512].copy_from_slice(&inner);

        let fm = stft_forward(&x, &spec).unwrap();
        let coeff_energy: f64 = fm
            .frames
            .iter()
            .flat_map(|f| f.iter().map(|c| c.norm_sqr()))
            .sum();
        // unnormalized DFT scales energy by `size`; windowing scales it
        // by the squared-window overlap constant
        let w = spec.window.build(spec.size);
        let overlap: f64 = w
            .iter()
            .enumerate()
            .filter(|(n, _)| n % spec.hop == 0)
            .map(|(_, &wn)| wn * wn)
            .sum();
        let signal_energy: f64 = x.iter().map(|v| v * v).sum();
        let ratio = coeff_energy / (spec.size as f64 * overlap * signal_energy);
        assert!((ratio - 1.0).abs() < 1e-9, "ratio={ratio}");
    }

    #[test]
    fn roundtrip_report_patch_reference() {
        let x = noise(8192, 13);
        let r = roundtrip_report(&x, &FilterbankSpec::Patch { size: 320 }).unwrap();
        assert_eq!(r.relative_l2, 0.0);
        assert_eq!(r.max_abs_error, 0.0);
        assert_eq!(r.critical_sampling_ratio, 1.0);
    }

    #[test]
    fn error_spread_patch_flatter_than_mdct() {
        // perturb every coefficient with iid noise of equal energy and
        // compare the short-lag autocorrelation of the squared error:
        // patch errors stay sample-independent while MDCT errors are
        // correlated across each window span
        let x = noise(16_384, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);

        let size = 256;
        let m = size / 2;

        let fm = patch_forward(&x, m).unwrap();
        let base = patch_inverse(&fm, m).unwrap();
        let mut fm2 = fm.clone();
        for f in fm2.frames.iter_mut() {
            for v in f.iter_mut() {
                *v += 0.01 * rng.gen_range(-1.0f64..1.0);
            }
        }
        let pert = patch_inverse(&fm2, m).unwrap();
        let e_patch: Vec<f64> = pert.iter().zip(&base).map(|(a, b)| a - b).collect();

        let fm = mdct_forward(&x, size).unwrap();
        let base = mdct_inverse(&fm, size).unwrap();
        let mut fm2 = fm.clone();
        for f in fm2.frames.iter_mut() {
            for v in f.iter_mut() {
                *v += 0.01 * rng.gen_range(-1.0f64..1.0);
            }
        }
        let pert = mdct_inverse(&fm2, size).unwrap();
        let e_mdct: Vec<f64> = pert.iter().zip(&base).map(|(a, b)| a - b).collect();

        fn sq_autocorr_peak(e: &[f64], max_lag: usize) -> f64 {
            let sq: Vec<f64> = e.iter().map(|v| v * v).collect();
            let mean = sq.iter().sum::<f64>() / sq.len() as f64;
            let centered: Vec<f64> = sq.iter().map(|v| v - mean).collect();
            let var: f64 = centered.iter().map(|v| v * v).sum();
            (1..=max_lag)
                .map(|lag| {
                    centered[..centered.len() - lag]
                        .iter()
                        .zip(&centered[lag..])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .abs()
                        / var
                })
                .fold(0.0, f64::max)
        }

        let patch_peak = sq_autocorr_peak(&e_patch, 8);
        let mdct_peak = sq_autocorr_peak(&e_mdct, 8);
        assert!(patch_peak < mdct_peak, "patch={patch_peak} mdct={mdct_peak}");
    }
}
