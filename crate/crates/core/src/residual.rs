//! Post-hoc residual decomposition of a single FSQ code.
//!
//! A quantizer trained with `L = 2^n + 1` levels can be split after
//! training into a cascade of coarse-to-fine stages: stage 0 quantizes
//! the latent itself, and stage `k` quantizes the running residual
//! scaled up by `(L-1)^k`, recovering values on a lattice `(L-1)^k`
//! times finer:
//!
//! ```text
//! q_0 = Q_L(z)
//! q_k = Q_L((L-1)^k * (z - sum_{i<k} q_i)) / (L-1)^k
//! zhat = clip(sum_k q_k, -1, 1)
//! ```
//!
//! Because consecutive level lattices subdivide exactly at interval
//! midpoints (`l_3 + l_3/2` covers `l_5`, and so on), every clipped sum
//! of stage values lands on the fine lattice with `(L-1)^{K+1} + 1`
//! levels — the same positions a single fine quantizer would have
//! produced. [`superset_check`] verifies that claim exhaustively.

use crate::quantizer::{self, QuantizerError, QuantizerSpec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ResidualError {
    #[error("residual decomposition needs L = 2^n + 1 levels, got {0}")]
    UnsupportedLevels(u32),
    #[error("stage count must be at least 1")]
    NoStages,
    #[error("enumeration of {0} combinations exceeds the 2^24 guard")]
    CapacityExceeded(u128),
    #[error("stage {stage} token {token} out of range for codebook size {codebook}")]
    DecodeError { stage: usize, token: u64, codebook: u64 },
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
}

/// Returns `n` when `L = 2^n + 1` with `n >= 1`, the level counts that
/// admit a residual decomposition.
pub fn validate_residual_levels(levels: u32) -> Result<u32, ResidualError> {
    if levels >= 3 && (levels - 1).is_power_of_two() {
        Ok((levels - 1).trailing_zeros())
    } else {
        Err(ResidualError::UnsupportedLevels(levels))
    }
}

/// Level count and stage count of a residual cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualSpec {
    levels: u32,
    n: u32,
    stages: usize,
}

impl ResidualSpec {
    /// `stages` is the total quantizer count `K + 1`.
    pub fn new(levels: u32, stages: usize) -> Result<Self, ResidualError> {
        let n = validate_residual_levels(levels)?;
        if stages == 0 {
            return Err(ResidualError::NoStages);
        }
        Ok(ResidualSpec { levels, n, stages })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// `n` with `L = 2^n + 1`.
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Residual scale factor per stage, `L - 1 = 2^n`.
    pub fn stage_scale(&self) -> f64 {
        (self.levels - 1) as f64
    }

    /// Multiplier applied before quantizing stage `k`: `(L-1)^k`.
    pub fn scale_at(&self, stage: usize) -> f64 {
        self.stage_scale().powi(stage as i32)
    }

    /// Level count of the equivalent single fine quantizer,
    /// `(L-1)^stages + 1`, or `None` on overflow.
    pub fn fine_levels(&self) -> Option<u64> {
        (self.levels as u64 - 1)
            .checked_pow(self.stages as u32)
            .and_then(|v| v.checked_add(1))
    }
}

/// Stage outputs and clipped reconstruction for one latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFrame {
    /// `stages` vectors of `d` values each; stage `k` values lie on the
    /// `L`-level lattice scaled by `(L-1)^-k`.
    pub stage_values: Vec<Vec<f64>>,
    /// `clip(sum_k q_k, -1, 1)` per dimension.
    pub reconstruction: Vec<f64>,
}

/// Decomposes a latent vector into residual stages.
pub fn residual_decompose(z: &[f64], spec: &ResidualSpec) -> Result<ResidualFrame, ResidualError> {
    for &x in z {
        if !x.is_finite() {
            return Err(QuantizerError::InvalidInput(x).into());
        }
    }
    let mut stage_values = vec![vec![0.0; z.len()]; spec.stages()];
    let mut remainder: Vec<f64> = z.to_vec();
    for (k, stage) in stage_values.iter_mut().enumerate() {
        let scale = spec.scale_at(k);
        for (rem, out) in remainder.iter_mut().zip(stage.iter_mut()) {
            let q = quantizer::quantize_scalar(*rem * scale, spec.levels())? / scale;
            *out = q;
            *rem -= q;
        }
    }
    let reconstruction = z
        .iter()
        .zip(&remainder)
        .map(|(&zi, &rem)| (zi - rem).clamp(-1.0, 1.0))
        .collect();
    Ok(ResidualFrame {
        stage_values,
        reconstruction,
    })
}

/// Token digits of each stage use the unscaled `L`-level lattice; the
/// stage scaling is implicit in the stage number. This rebuilds stage
/// values from per-stage token indices and sums them with clipping.
pub fn residual_reconstruct(
    stage_tokens: &[u64],
    spec: &ResidualSpec,
    qspec: &QuantizerSpec,
) -> Result<Vec<f64>, ResidualError> {
    if stage_tokens.len() != spec.stages() {
        return Err(QuantizerError::ShapeError {
            expected: spec.stages(),
            got: stage_tokens.len(),
        }
        .into());
    }
    let codebook = qspec.codebook_size().map_err(ResidualError::Quantizer)?;
    let mut sum = vec![0.0; qspec.dims()];
    for (k, &token) in stage_tokens.iter().enumerate() {
        if token >= codebook {
            return Err(ResidualError::DecodeError {
                stage: k,
                token,
                codebook,
            });
        }
        let values = quantizer::token_to_values(token, qspec)?;
        let scale = spec.scale_at(k);
        for (acc, v) in sum.iter_mut().zip(values) {
            *acc += v / scale;
        }
    }
    Ok(sum.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
}

/// Token indices for each stage of a decomposed frame.
pub fn stage_tokens(frame: &ResidualFrame, spec: &ResidualSpec) -> Result<Vec<u64>, ResidualError> {
    let mut tokens = Vec::with_capacity(frame.stage_values.len());
    for (k, values) in frame.stage_values.iter().enumerate() {
        let scale = spec.scale_at(k);
        let mut index = 0u64;
        let mut radix = 1u64;
        for (dim, &v) in values.iter().enumerate() {
            let digit = quantizer::value_digit(v * scale, spec.levels(), dim)?;
            index += digit as u64 * radix;
            radix *= spec.levels() as u64;
        }
        let _ = k;
        tokens.push(index);
    }
    Ok(tokens)
}

/// Outcome of the exhaustive lattice-superset enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct SupersetReport {
    pub levels: u32,
    pub stages: usize,
    /// Level count of the fine lattice every clipped sum must hit.
    pub fine_levels: u64,
    pub combinations: u64,
    /// Stage-value combinations whose clipped sum is off the fine
    /// lattice; empty when the superset claim holds.
    pub violations: Vec<Vec<f64>>,
}

impl SupersetReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

const ENUMERATION_GUARD: u128 = 1 << 24;

/// Enumerates every per-dimension combination of stage values and checks
/// that each clipped sum lies on the `(L-1)^stages + 1`-level lattice.
pub fn superset_check(levels: u32, stages: usize) -> Result<SupersetReport, ResidualError> {
    let spec = ResidualSpec::new(levels, stages)?;
    let combos = (levels as u128).checked_pow(stages as u32);
    let combos = match combos {
        Some(c) if c <= ENUMERATION_GUARD => c as u64,
        other => {
            return Err(ResidualError::CapacityExceeded(
                other.unwrap_or(u128::MAX),
            ))
        }
    };
    let fine_levels = spec
        .fine_levels()
        .ok_or(ResidualError::CapacityExceeded(u128::MAX))?;
    let fine_span = (fine_levels - 1) as f64;

    let positions = quantizer::level_positions(levels)?.positions().to_vec();
    let mut violations = Vec::new();
    for combo in 0..combos {
        let mut rem = combo;
        let mut sum = 0.0;
        let mut values = Vec::with_capacity(stages);
        for k in 0..stages {
            let digit = (rem % levels as u64) as usize;
            rem /= levels as u64;
            let v = positions[digit] / spec.scale_at(k);
            values.push(v);
            sum += v;
        }
        let clipped = sum.clamp(-1.0, 1.0);
        // membership on the fine lattice: (v+1)/2*(fine-1) must be integral
        let digit = fine_span * (clipped + 1.0) / 2.0;
        if (digit - digit.round()).abs() > 1e-9 {
            violations.push(values);
        }
    }
    Ok(SupersetReport {
        levels,
        stages,
        fine_levels,
        combinations: combos,
        violations,
    })
}

/// Splits a latent vector across parallel token streams by partitioning
/// dimensions into contiguous groups, the alternative decomposition to
/// the residual cascade. No causal ordering between the parts is
/// implied.
pub fn partition_dimensions(z: &[f64], parts: usize) -> Result<Vec<Vec<f64>>, ResidualError> {
    if parts == 0 || parts > z.len() {
        return Err(QuantizerError::ShapeError {
            expected: z.len().max(1),
            got: parts,
        }
        .into());
    }
    let base = z.len() / parts;
    let extra = z.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(z[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validate_levels() {
        assert_eq!(validate_residual_levels(3).unwrap(), 1);
        assert_eq!(validate_residual_levels(5).unwrap(), 2);
        assert_eq!(validate_residual_levels(9).unwrap(), 3);
        assert_eq!(validate_residual_levels(17).unwrap(), 4);
        assert_eq!(
            validate_residual_levels(6).unwrap_err(),
            ResidualError::UnsupportedLevels(6)
        );
        assert_eq!(
            validate_residual_levels(2).unwrap_err(),
            ResidualError::UnsupportedLevels(2)
        );
    }

    #[test]
    fn decompose_zero_vector() {
        let spec = ResidualSpec::new(5, 3).unwrap();
        let frame = residual_decompose(&[0.0, 0.0], &spec).unwrap();
        for stage in &frame.stage_values {
            assert_eq!(stage, &vec![0.0, 0.0]);
        }
        assert_eq!(frame.reconstruction, vec![0.0, 0.0]);
    }

    #[test]
    fn decompose_worked_examples() {
        // tanh(0.5) = 0.462 rounds to 0; the full residual 0.5 scaled by
        // 2 saturates to 1, contributing 0.5 at stage 1
        let spec = ResidualSpec::new(3, 2).unwrap();
        let frame = residual_decompose(&[0.5], &spec).unwrap();
        assert_eq!(frame.stage_values[0], vec![0.0]);
        assert_eq!(frame.stage_values[1], vec![0.5]);
        assert_eq!(frame.reconstruction, vec![0.5]);

        // tanh(0.9) = 0.716 rounds to 1; residual -0.1 doubles to -0.2,
        // tanh(-0.2) = -0.197 rounds back to 0
        let frame = residual_decompose(&[0.9], &spec).unwrap();
        assert_eq!(frame.stage_values[0], vec![1.0]);
        assert_eq!(frame.stage_values[1], vec![0.0]);
        assert_eq!(frame.reconstruction, vec![1.0]);
    }

    #[test]
    fn stage_values_are_scaled_lattice_multiples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (levels, stages) in [(3u32, 3usize), (5, 2), (9, 2)] {
            let spec = ResidualSpec::new(levels, stages).unwrap();
            for _ in 0..500 {
                let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let frame = residual_decompose(&z, &spec).unwrap();
                for (k, stage) in frame.stage_values.iter().enumerate() {
                    let unit = 2.0 / (levels - 1) as f64 / spec.scale_at(k);
                    for &v in stage {
                        let m = v / unit;
                        assert!((m - m.round()).abs() < 1e-9, "stage {k} value {v}");
                    }
                }
                for &r in &frame.reconstruction {
                    assert!((-1.0..=1.0).contains(&r));
                }
            }
        }
    }

    #[test]
    fn reconstruct_from_tokens_round_trips() {
        let spec = ResidualSpec::new(3, 2).unwrap();
        let qspec = QuantizerSpec::uniform(3, 2, Rate::from_hz(25)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10_000 {
            let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let frame = residual_decompose(&z, &spec).unwrap();
            let tokens = stage_tokens(&frame, &spec).unwrap();
            let rebuilt = residual_reconstruct(&tokens, &spec, &qspec).unwrap();
            assert_eq!(rebuilt, frame.reconstruction);
        }
    }

    #[test]
    fn reconstruct_clips_out_of_range_sums() {
        // q_0 = 1 and q_1 = 0.5 per dimension sums to 1.5, clipped to 1
        let spec = ResidualSpec::new(3, 2).unwrap();
        let qspec = QuantizerSpec::uniform(3, 1, Rate::from_hz(25)).unwrap();
        let top = 2; // digit 2 of 3 = value 1.0 at stage scale
        let rebuilt = residual_reconstruct(&[top, top], &spec, &qspec).unwrap();
        assert_eq!(rebuilt, vec![1.0]);

        let center = 1;
        let rebuilt = residual_reconstruct(&[center, center], &spec, &qspec).unwrap();
        assert_eq!(rebuilt, vec![0.0]);

        assert!(matches!(
            residual_reconstruct(&[3, 0], &spec, &qspec),
            Err(ResidualError::DecodeError { .. })
        ));
    }

    #[test]
    fn superset_small_configs() {
        let report = superset_check(3, 2).unwrap();
        assert_eq!(report.combinations, 9);
        assert_eq!(report.fine_levels, 5);
        assert!(report.holds());

        let report = superset_check(5, 2).unwrap();
        assert_eq!(report.combinations, 25);
        assert_eq!(report.fine_levels, 17);
        assert!(report.holds());

        let report = superset_check(3, 1).unwrap();
        assert_eq!(report.fine_levels, 3);
        assert!(report.holds());

        // finer configs keep the closure property
        assert!(superset_check(9, 2).unwrap().holds());
        assert!(superset_check(3, 3).unwrap().holds());
        assert!(superset_check(17, 2).unwrap().holds());

        assert!(matches!(
            superset_check(17, 7),
            Err(ResidualError::CapacityExceeded(_))
        ));
    }

    #[test]
    fn more_stages_never_hurt_on_a_dense_grid() {
        // empirical weak monotonicity: adding stages does not increase
        // the reconstruction error anywhere on a dense grid
        for (levels, max_extra) in [(3u32, 2usize), (5, 1)] {
            let base = ResidualSpec::new(levels, 1).unwrap();
            for extra in 1..=max_extra {
                let deep = ResidualSpec::new(levels, 1 + extra).unwrap();
                for i in 0..=4000 {
                    let z = -1.0 + 2.0 * i as f64 / 4000.0;
                    let e0 = (z - residual_decompose(&[z], &base).unwrap().reconstruction[0]).abs();
                    let ek = (z - residual_decompose(&[z], &deep).unwrap().reconstruction[0]).abs();
                    assert!(
                        ek <= e0 + 1e-12,
                        "L={levels} stages={} z={z}: {ek} > {e0}",
                        1 + extra
                    );
                }
            }
        }
    }

    #[test]
    fn decompose_then_reconstruct_error_statistics() {
        // the interior tanh keeps some latents off the nearest fine
        // lattice point; report the empirical gap rather than asserting
        // optimality
        let spec = ResidualSpec::new(3, 2).unwrap();
        let fine = spec.fine_levels().unwrap();
        let fine_step = 2.0 / (fine - 1) as f64;
        let mut worst: f64 = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5000 {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let rec = residual_decompose(&[z], &spec).unwrap().reconstruction[0];
            worst = worst.max((z - rec).abs());
        }
        // never worse than one full coarse step, usually near fine_step/2
        assert!(worst <= 2.0 / (spec.levels() - 1) as f64);
        assert!(worst >= fine_step / 2.0 - 1e-12);
    }

    #[test]
    fn partition_dimensions_splits_evenly() {
        let z = [1.0, 2.0, 3.0, 4.0, 5.0];
        let parts = partition_dimensions(&z, 2).unwrap();
        assert_eq!(parts, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0]]);
        assert!(partition_dimensions(&z, 0).is_err());
        assert!(partition_dimensions(&z, 6).is_err());
    }
}
