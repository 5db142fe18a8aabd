//! Symmetric tanh-based finite scalar quantization.
//!
//! Each latent dimension is squashed with `tanh` and rounded onto `L`
//! evenly spaced levels spanning `[-1, 1]`:
//!
//! ```text
//! Q_L(x) = (2 / (L-1)) * floor((L-1) * (tanh x + 1) / 2 + 1/2) - 1
//! ```
//!
//! The level tuple of a `d`-dimensional frame maps to a single integer
//! token through a mixed-radix encoding with dimension 0 least
//! significant. A training-time noise approximation replaces the hard
//! rounding with additive uniform noise of matching amplitude.

use rand::Rng;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuantizerError {
    #[error("level count must be at least 2 (got {0})")]
    InvalidLevelCount(u32),
    #[error("input must be finite (got {0})")]
    InvalidInput(f64),
    #[error("noise must lie in [-1, 1] (got {0})")]
    InvalidNoise(f64),
    #[error("expected {expected} dimensions, got {got}")]
    ShapeError { expected: usize, got: usize },
    #[error("value {value} is not on the {levels}-level lattice (dimension {dim})")]
    OffLattice { value: f64, levels: u32, dim: usize },
    #[error("token index {index} out of range for codebook size {codebook}")]
    IndexOutOfRange { index: u64, codebook: u64 },
    #[error("codebook size overflows u64")]
    CodebookOverflow,
    #[error("level choices must be non-empty")]
    EmptyChoices,
    #[error("frame rate must be positive")]
    InvalidFrameRate,
}

/// The `L` evenly spaced quantization positions in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    levels: u32,
    positions: Vec<f64>,
}

impl LevelSet {
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Position of the `i`-th level: `2i/(L-1) - 1`.
    ///
    /// Computed with the exact expression used everywhere else in this
    /// module, so equality checks against quantizer output are bitwise.
    pub fn position(levels: u32, digit: u32) -> f64 {
        debug_assert!(digit < levels);
        2.0 * digit as f64 / (levels - 1) as f64 - 1.0
    }
}

/// Returns the ordered level positions `{2i/(L-1) - 1 : i = 0..L-1}`.
pub fn level_positions(levels: u32) -> Result<LevelSet, QuantizerError> {
    if levels < 2 {
        return Err(QuantizerError::InvalidLevelCount(levels));
    }
    let positions = (0..levels).map(|i| LevelSet::position(levels, i)).collect();
    Ok(LevelSet { levels, positions })
}

/// Digit (level index) selected by the scalar quantizer for input `x`.
///
/// Exact half-step inputs round up, following the mathematical floor in
/// the quantizer definition.
pub fn quantize_digit(x: f64, levels: u32) -> Result<u32, QuantizerError> {
    if levels < 2 {
        return Err(QuantizerError::InvalidLevelCount(levels));
    }
    if !x.is_finite() {
        return Err(QuantizerError::InvalidInput(x));
    }
    let span = (levels - 1) as f64;
    let digit = (span * (x.tanh() + 1.0) / 2.0 + 0.5).floor();
    // tanh stays strictly inside (-1, 1) so the digit is already in
    // range; the clamp only guards float edge cases.
    Ok((digit.max(0.0) as u32).min(levels - 1))
}

/// Scalar quantizer: `tanh`, then rounding onto the `L`-level lattice.
///
/// The result is always a member of [`level_positions`]`(levels)`.
pub fn quantize_scalar(x: f64, levels: u32) -> Result<f64, QuantizerError> {
    let digit = quantize_digit(x, levels)?;
    Ok(LevelSet::position(levels, digit))
}

/// Noise approximation of the quantizer: `tanh x + u/(L-1)`.
///
/// `u` is a uniform sample from `[-1, 1]`; the output is not constrained
/// to lattice points. The noise amplitude `1/(L-1)` equals the hard
/// quantizer's worst-case error.
pub fn noisy_quantize(x: f64, levels: u32, u: f64) -> Result<f64, QuantizerError> {
    if levels < 2 {
        return Err(QuantizerError::InvalidLevelCount(levels));
    }
    if !x.is_finite() {
        return Err(QuantizerError::InvalidInput(x));
    }
    if !(-1.0..=1.0).contains(&u) {
        return Err(QuantizerError::InvalidNoise(u));
    }
    Ok(x.tanh() + u / (levels - 1) as f64)
}

/// Per-dimension level counts, FSQ dimensionality and frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    levels: Vec<u32>,
    frame_rate: crate::Rate,
}

impl QuantizerSpec {
    pub fn new(levels: Vec<u32>, frame_rate: crate::Rate) -> Result<Self, QuantizerError> {
        if levels.is_empty() {
            return Err(QuantizerError::ShapeError {
                expected: 1,
                got: 0,
            });
        }
        for &l in &levels {
            if l < 2 {
                return Err(QuantizerError::InvalidLevelCount(l));
            }
        }
        let spec = QuantizerSpec { levels, frame_rate };
        spec.codebook_size()?;
        Ok(spec)
    }

    /// Same level count for every dimension.
    pub fn uniform(levels: u32, dims: usize, frame_rate: crate::Rate) -> Result<Self, QuantizerError> {
        QuantizerSpec::new(vec![levels; dims], frame_rate)
    }

    pub fn dims(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn frame_rate(&self) -> crate::Rate {
        self.frame_rate
    }

    /// Product of all level counts, overflow-checked.
    pub fn codebook_size(&self) -> Result<u64, QuantizerError> {
        self.levels
            .iter()
            .try_fold(1u64, |acc, &l| acc.checked_mul(l as u64))
            .ok_or(QuantizerError::CodebookOverflow)
    }
}

/// One quantized latent frame: the level values and their token index.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFrame {
    pub values: Vec<f64>,
    pub index: u64,
}

/// Applies the scalar quantizer per dimension and packs the token index.
pub fn quantize_vector(z: &[f64], spec: &QuantizerSpec) -> Result<QuantizedFrame, QuantizerError> {
    if z.len() != spec.dims() {
        return Err(QuantizerError::ShapeError {
            expected: spec.dims(),
            got: z.len(),
        });
    }
    let mut values = Vec::with_capacity(z.len());
    let mut index = 0u64;
    let mut radix = 1u64;
    for (&x, &l) in z.iter().zip(spec.levels()) {
        let digit = quantize_digit(x, l)?;
        values.push(LevelSet::position(l, digit));
        index += digit as u64 * radix;
        radix *= l as u64;
    }
    Ok(QuantizedFrame { values, index })
}

const LATTICE_TOLERANCE: f64 = 1e-9;

/// Digit of `value` on the `levels`-point lattice, or an off-lattice error.
pub fn value_digit(value: f64, levels: u32, dim: usize) -> Result<u32, QuantizerError> {
    if levels < 2 {
        return Err(QuantizerError::InvalidLevelCount(levels));
    }
    let digit = ((levels - 1) as f64 * (value + 1.0) / 2.0).round();
    if !(0.0..=(levels - 1) as f64).contains(&digit)
        || (LevelSet::position(levels, digit as u32) - value).abs() > LATTICE_TOLERANCE
    {
        return Err(QuantizerError::OffLattice { value, levels, dim });
    }
    Ok(digit as u32)
}

/// Mixed-radix token index of a level-value tuple (dimension 0 least
/// significant).
pub fn token_index(values: &[f64], spec: &QuantizerSpec) -> Result<u64, QuantizerError> {
    if values.len() != spec.dims() {
        return Err(QuantizerError::ShapeError {
            expected: spec.dims(),
            got: values.len(),
        });
    }
    let mut index = 0u64;
    let mut radix = 1u64;
    for (dim, (&v, &l)) in values.iter().zip(spec.levels()).enumerate() {
        let digit = value_digit(v, l, dim)?;
        index += digit as u64 * radix;
        radix *= l as u64;
    }
    Ok(index)
}

/// Inverse of [`token_index`]: recovers exact level values from a token.
pub fn token_to_values(index: u64, spec: &QuantizerSpec) -> Result<Vec<f64>, QuantizerError> {
    let codebook = spec.codebook_size()?;
    if index >= codebook {
        return Err(QuantizerError::IndexOutOfRange { index, codebook });
    }
    let mut rem = index;
    let mut values = Vec::with_capacity(spec.dims());
    for &l in spec.levels() {
        let digit = (rem % l as u64) as u32;
        rem /= l as u64;
        values.push(LevelSet::position(l, digit));
    }
    Ok(values)
}

/// Uniform draw from a pre-selected set of level counts.
///
/// Deterministic under a fixed RNG state. The draw granularity
/// (per-batch, per-example, per-frame) is the caller's choice.
pub fn sample_level_config<R: Rng>(rng: &mut R, choices: &[u32]) -> Result<u32, QuantizerError> {
    if choices.is_empty() {
        return Err(QuantizerError::EmptyChoices);
    }
    let i = rng.gen_range(0..choices.len());
    Ok(choices[i])
}

/// Training-time quantizer mode: half noise injection, half
/// straight-through, sampled 50/50.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeMode {
    Noise,
    StraightThrough,
}

/// Draws the hybrid training mode with equal probability.
pub fn sample_quantize_mode<R: Rng>(rng: &mut R) -> QuantizeMode {
    if rng.gen_bool(0.5) {
        QuantizeMode::Noise
    } else {
        QuantizeMode::StraightThrough
    }
}
