//! `key = value` model configuration files. Unknown keys are rejected.
//!
//! ```text
//! sample_rate = 16000
//! patch_size = 320
//! blocks = 2x1,4x2          # layers x stride per encoder block
//! embed_dim = 64
//! head_dim = 16
//! window = 16
//! causal = false
//! layer_norm_eps = 0.01
//! ff_expansion = 4
//! levels = 5,5,5,5,5,5
//! seed = 42
//! ```

use fsqkit::toymodel::{BlockSpec, ModelSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
}

pub fn parse_model_spec(text: &str) -> Result<ModelSpec, ConfigError> {
    let mut sample_rate = None;
    let mut patch_size = None;
    let mut blocks = None;
    let mut embed_dim = None;
    let mut head_dim = None;
    let mut window = None;
    let mut causal = None;
    let mut eps = None;
    let mut ff = None;
    let mut levels = None;
    let mut seed = None;

    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        let err = |reason: String| ConfigError::Parse { line: n, reason };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "sample_rate" => sample_rate = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            "patch_size" => patch_size = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            "blocks" => {
                let mut parsed = Vec::new();
                for part in value.split(',') {
                    let (l, s) = part
                        .trim()
                        .split_once('x')
                        .ok_or_else(|| err(format!("block `{part}` is not LAYERSxSTRIDE")))?;
                    parsed.push(BlockSpec {
                        layers: l.trim().parse().map_err(|e| err(format!("{e}")))?,
                        stride: s.trim().parse().map_err(|e| err(format!("{e}")))?,
                    });
                }
                blocks = Some(parsed);
            }
            "embed_dim" => embed_dim = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            "head_dim" => head_dim = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            "window" => window = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            "causal" => {
                causal = Some(match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(err(format!("causal must be true/false, got `{value}`"))),
                })
            }
            "layer_norm_eps" => eps = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            "ff_expansion" => ff = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            "levels" => {
                let parsed: Result<Vec<u32>, _> =
                    value.split(',').map(|v| v.trim().parse()).collect();
                levels = Some(parsed.map_err(|e| err(format!("{e}")))?);
            }
            "seed" => seed = Some(value.parse().map_err(|e| err(format!("{e}")))?),
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }

    Ok(ModelSpec {
        sample_rate: sample_rate.ok_or(ConfigError::Missing("sample_rate"))?,
        patch_size: patch_size.ok_or(ConfigError::Missing("patch_size"))?,
        blocks: blocks.ok_or(ConfigError::Missing("blocks"))?,
        embed_dim: embed_dim.ok_or(ConfigError::Missing("embed_dim"))?,
        head_dim: head_dim.ok_or(ConfigError::Missing("head_dim"))?,
        window: window.ok_or(ConfigError::Missing("window"))?,
        causal: causal.ok_or(ConfigError::Missing("causal"))?,
        layer_norm_eps: eps.ok_or(ConfigError::Missing("layer_norm_eps"))?,
        ff_expansion: ff.ok_or(ConfigError::Missing("ff_expansion"))?,
        levels: levels.ok_or(ConfigError::Missing("levels"))?,
        seed: seed.ok_or(ConfigError::Missing("seed"))?,
    })
}

pub fn format_model_spec(spec: &ModelSpec) -> String {
    let blocks: Vec<String> = spec
        .blocks
        .iter()
        .map(|b| format!("{}x{}", b.layers, b.stride))
        .collect();
    let levels: Vec<String> = spec.levels.iter().map(|l| l.to_string()).collect();
    format!(
        "sample_rate = {}\npatch_size = {}\nblocks = {}\nembed_dim = {}\nhead_dim = {}\nwindow = {}\ncausal = {}\nlayer_norm_eps = {}\nff_expansion = {}\nlevels = {}\nseed = {}\n",
        spec.sample_rate,
        spec.patch_size,
        blocks.join(","),
        spec.embed_dim,
        spec.head_dim,
        spec.window,
        spec.causal,
        spec.layer_norm_eps,
        spec.ff_expansion,
        levels.join(","),
        spec.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_rejects_unknown_keys() {
        let spec = ModelSpec::toy(42);
        let text = format_model_spec(&spec);
        let back = parse_model_spec(&text).unwrap();
        assert_eq!(back, spec);

        let with_extra = format!("{text}bogus = 1\n");
        assert!(matches!(
            parse_model_spec(&with_extra),
            Err(ConfigError::Parse { .. })
        ));

        assert!(matches!(
            parse_model_spec("sample_rate = 16000\n"),
            Err(ConfigError::Missing(_))
        ));
    }
}
