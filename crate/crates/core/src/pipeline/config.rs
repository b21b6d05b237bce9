// SPDX-License-Identifier: MIT OR Apache-2.0

//! Plain-text `key = value` overrides for [`ModelConfig`].
//!
//! Blank lines and lines starting with `#` are ignored. Keys: `d_model`,
//! `n_layers`, `n_heads`, `vocab_size`, `weight_seed`, `top_k`,
//! `temperature`, `codebooks` (`K`), `codebook_size` (`M`), `frames` (`T`)
//! and `frame_rate`.

use std::path::Path;
use std::str::FromStr;

use crate::ar_model::ModelConfig;
use crate::error::{Error, Result};

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::ConfigLine {
        line,
        message: format!("cannot parse {raw:?} for {key}"),
    })
}

/// Applies the overrides in `text` on top of `base` and validates the result.
pub fn parse_config(text: &str, base: ModelConfig) -> Result<ModelConfig> {
    let mut cfg = base;
    for (i, raw_line) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(Error::ConfigLine {
                line: n,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        let (key, raw) = (key.trim(), raw.trim());
        match key {
            "d_model" => cfg.d_model = value(n, key, raw)?,
            "n_layers" => cfg.n_layers = value(n, key, raw)?,
            "n_heads" => cfg.n_heads = value(n, key, raw)?,
            "vocab_size" => cfg.vocab_size = value(n, key, raw)?,
            "weight_seed" => cfg.weight_seed = value(n, key, raw)?,
            "top_k" => cfg.top_k = value(n, key, raw)?,
            "temperature" => cfg.temperature = value(n, key, raw)?,
            "codebooks" | "K" => cfg.codec.k = value(n, key, raw)?,
            "codebook_size" | "M" => cfg.codec.m = value(n, key, raw)?,
            "frames" | "T" => cfg.codec.t = value(n, key, raw)?,
            "frame_rate" => cfg.codec.frame_rate = value(n, key, raw)?,
            _ => {
                return Err(Error::ConfigLine {
                    line: n,
                    message: format!("unknown key {key:?}"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, base: ModelConfig) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply() {
        let cfg = parse_config(
            "# small\nd_model = 32\nK=4\nframes = 16\ntemperature=0.5\n\n",
            ModelConfig::default(),
        )
        .unwrap();
        assert_eq!(cfg.d_model, 32);
        assert_eq!(cfg.codec.k, 4);
        assert_eq!(cfg.codec.t, 16);
        assert_eq!(cfg.temperature, 0.5);
        assert_eq!(cfg.n_layers, ModelConfig::default().n_layers);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |text: &str| match parse_config(text, ModelConfig::default()) {
            Err(Error::ConfigLine { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("d_model = 32\nbogus = 1"), 2);
        assert_eq!(line_of("\n\nn_heads = four"), 3);
        assert_eq!(line_of("no equals sign"), 1);
        assert!(matches!(
            parse_config("d_model = 30", ModelConfig::default()),
            Err(Error::InvalidConfig(_))
        ));
    }
}
