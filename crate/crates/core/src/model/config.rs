use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{ModelError, Result};
use crate::audio::{MEL_BANDS, PATCH_FRAMES};

/// Number of modulated fusion blocks in the backend.
pub const FUSION_BLOCKS: usize = 6;
/// Pools in the visual frontend; the backend runs at 1/8 resolution.
pub const VISUAL_POOLS: usize = 3;
pub const DOWNSAMPLE: usize = 1 << VISUAL_POOLS;

/// One frontend stage: a 3×3 convolution + ReLU of the given width, or a
/// 2×2 max-pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv(usize),
    Pool,
}

/// Parses `16,16,M,32` style layer lists.
pub fn parse_layers(s: &str) -> Result<Vec<Layer>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            if t.eq_ignore_ascii_case("m") {
                Ok(Layer::Pool)
            } else {
                t.parse::<usize>()
                    .map(Layer::Conv)
                    .map_err(|_| ModelError::Config(format!("bad layer token '{}'", t)))
            }
        })
        .collect()
}

pub fn format_layers(layers: &[Layer]) -> String {
    layers
        .iter()
        .map(|l| match l {
            Layer::Conv(c) => c.to_string(),
            Layer::Pool => "M".into(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| ModelError::Config(format!("bad width '{}'", t)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub visual: Vec<Layer>,
    pub audio: Vec<Layer>,
    /// Output channels of the six fusion blocks.
    pub backend: Vec<usize>,
    /// One γ/β projection pair sliced per block instead of one per block.
    pub film_shared: bool,
    pub audio_enabled: bool,
    /// Initial value of every convolution bias except the head's. Positive
    /// so ReLU units are live even on an all-zero input.
    pub bias_init: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            visual: parse_layers("16,16,M,32,32,M,64,M,64").expect("static"),
            audio: parse_layers("16,M,16,M,32,M,64,M").expect("static"),
            backend: vec![64, 64, 64, 32, 16, 8],
            film_shared: false,
            audio_enabled: true,
            bias_init: 0.01,
            seed: 0,
        }
    }
}

fn last_width(layers: &[Layer], input: usize) -> usize {
    layers
        .iter()
        .rev()
        .find_map(|l| match l {
            Layer::Conv(c) => Some(*c),
            Layer::Pool => None,
        })
        .unwrap_or(input)
}

fn pools(layers: &[Layer]) -> usize {
    layers.iter().filter(|l| **l == Layer::Pool).count()
}

impl ModelConfig {
    /// Channel count `C` of the visual features.
    pub fn visual_channels(&self) -> usize {
        last_width(&self.visual, 3)
    }

    pub fn audio_channels(&self) -> usize {
        last_width(&self.audio, 1)
    }

    /// Spatial size of the audio features for a 96×64 patch.
    pub fn audio_feature_dims(&self) -> (usize, usize) {
        let p = pools(&self.audio);
        (PATCH_FRAMES >> p, MEL_BANDS >> p)
    }

    /// Same architecture without the audio branch.
    pub fn vision_only(&self) -> Self {
        Self {
            audio_enabled: false,
            ..self.clone()
        }
    }

    /// Multiplies every width by `factor`, keeping each at least 1.
    pub fn scaled(&self, factor: f64) -> Self {
        let w = |c: usize| ((c as f64 * factor).round() as usize).max(1);
        let layers = |ls: &[Layer]| {
            ls.iter()
                .map(|l| match l {
                    Layer::Conv(c) => Layer::Conv(w(*c)),
                    Layer::Pool => Layer::Pool,
                })
                .collect()
        };
        Self {
            visual: layers(&self.visual),
            audio: layers(&self.audio),
            backend: self.backend.iter().map(|&c| w(c)).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if pools(&self.visual) != VISUAL_POOLS {
            return bad(format!(
                "visual frontend needs exactly {} pools, got {}",
                VISUAL_POOLS,
                pools(&self.visual)
            ));
        }
        if self.backend.len() != FUSION_BLOCKS {
            return bad(format!(
                "backend needs {} widths, got {}",
                FUSION_BLOCKS,
                self.backend.len()
            ));
        }
        if !self.bias_init.is_finite() {
            return bad(format!("bias_init {} must be finite", self.bias_init));
        }
        let zero = |ls: &[Layer]| ls.contains(&Layer::Conv(0));
        if zero(&self.visual) || zero(&self.audio) || self.backend.contains(&0) {
            return bad("all widths must be >= 1".into());
        }
        if self.audio_enabled {
            let (h, w) = self.audio_feature_dims();
            if h == 0 || w == 0 {
                return bad(format!(
                    "{} audio pools leave no spatial extent",
                    pools(&self.audio)
                ));
            }
            if !self.audio.iter().any(|l| matches!(l, Layer::Conv(_))) {
                return bad("audio network needs at least one convolution".into());
            }
            if self.audio_channels() != self.visual_channels() {
                return bad(format!(
                    "audio feature width {} must equal visual width {}",
                    self.audio_channels(),
                    self.visual_channels()
                ));
            }
        }
        Ok(())
    }

    /// Flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut scale = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ModelError::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{}'", line)))?;
            let value = value.trim();
            let wrap = |e: ModelError| err(e.to_string());
            match key.trim() {
                "visual" => cfg.visual = parse_layers(value).map_err(wrap)?,
                "audio" => cfg.audio = parse_layers(value).map_err(wrap)?,
                "backend" => cfg.backend = parse_widths(value).map_err(wrap)?,
                "film_shared" => cfg.film_shared = parse_value(value).map_err(err)?,
                "audio_enabled" => cfg.audio_enabled = parse_value(value).map_err(err)?,
                "bias_init" => cfg.bias_init = parse_value(value).map_err(err)?,
                "seed" => cfg.seed = parse_value(value).map_err(err)?,
                "base_width" => scale = Some(parse_value::<f64>(value).map_err(err)?),
                other => return Err(err(format!("unknown key '{}'", other))),
            }
        }
        if let Some(f) = scale {
            if !(f > 0.0 && f.is_finite()) {
                return Err(ModelError::Config(format!("base_width {} must be > 0", f)));
            }
            cfg = cfg.scaled(f);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn parse_value<V: FromStr>(s: &str) -> std::result::Result<V, String>
where
    V::Err: fmt::Display,
{
    s.parse().map_err(|e| format!("bad value '{}': {}", s, e))
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "visual = {}", format_layers(&self.visual))?;
        writeln!(f, "audio = {}", format_layers(&self.audio))?;
        let backend: Vec<String> = self.backend.iter().map(|c| c.to_string()).collect();
        writeln!(f, "backend = {}", backend.join(","))?;
        writeln!(f, "film_shared = {}", self.film_shared)?;
        writeln!(f, "audio_enabled = {}", self.audio_enabled)?;
        writeln!(f, "bias_init = {}", self.bias_init)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.visual_channels(), 64);
        assert_eq!(cfg.audio_feature_dims(), (6, 4));
    }

    #[test]
    fn text_round_trip() {
        let cfg = ModelConfig {
            film_shared: true,
            seed: 17,
            ..ModelConfig::default()
        };
        assert_eq!(ModelConfig::parse(&cfg.to_string(), "mem").unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_shapes() {
        let two_pools = "visual = 8,M,8,M,8\naudio = 8,M";
        assert!(ModelConfig::parse(two_pools, "a").is_err());
        let five = "backend = 8,8,8,8,8";
        assert!(ModelConfig::parse(five, "b").is_err());
        let mismatch = "audio = 8,M,32,M";
        assert!(ModelConfig::parse(mismatch, "c").is_err());
        let err = ModelConfig::parse("seed = x", "d.cfg").unwrap_err();
        assert!(err.to_string().starts_with("d.cfg:1"));
        // the audio width only matters when audio is used
        assert!(ModelConfig::parse("audio = 8,M\naudio_enabled = false", "e").is_ok());
    }

    #[test]
    fn base_width_scales() {
        let cfg = ModelConfig::parse("base_width = 0.25", "s").unwrap();
        assert_eq!(cfg.backend, vec![16, 16, 16, 8, 4, 2]);
        assert_eq!(cfg.visual_channels(), 16);
    }
}
