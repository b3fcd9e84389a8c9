use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Eegnet,
    Resnet1d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// EEGNet temporal filter count (F1).
    #[serde(default = "default_f1")]
    pub temporal_filters: usize,
    /// EEGNet spatial filters per temporal filter (D).
    #[serde(default = "default_depth_multiplier")]
    pub depth_multiplier: usize,
    /// ResNet1D depth, 8 or 18.
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    #[serde(default = "default_in_timesteps")]
    pub in_timesteps: usize,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    /// Dropout probability used by every dropout layer; `None` selects the
    /// architecture default.
    #[serde(default)]
    pub dropout: Option<f64>,
}

fn default_f1() -> usize {
    8
}
fn default_depth_multiplier() -> usize {
    2
}
fn default_depth() -> usize {
    18
}
fn default_in_channels() -> usize {
    32
}
fn default_in_timesteps() -> usize {
    384
}
fn default_n_classes() -> usize {
    2
}

pub const EEGNET_DROPOUT: f64 = 0.25;
pub const RESNET_DROPOUT: f64 = 0.5;

impl ModelConfig {
    pub fn eegnet(temporal_filters: usize, depth_multiplier: usize) -> Self {
        ModelConfig {
            arch: Arch::Eegnet,
            temporal_filters,
            depth_multiplier,
            depth: default_depth(),
            in_channels: default_in_channels(),
            in_timesteps: default_in_timesteps(),
            n_classes: default_n_classes(),
            dropout: None,
        }
    }

    pub fn resnet1d(depth: usize) -> Self {
        ModelConfig {
            arch: Arch::Resnet1d,
            temporal_filters: default_f1(),
            depth_multiplier: default_depth_multiplier(),
            depth,
            in_channels: default_in_channels(),
            in_timesteps: default_in_timesteps(),
            n_classes: default_n_classes(),
            dropout: None,
        }
    }

    pub fn with_input(mut self, channels: usize, timesteps: usize) -> Self {
        self.in_channels = channels;
        self.in_timesteps = timesteps;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = Some(p);
        self
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout.unwrap_or(match self.arch {
            Arch::Eegnet => EEGNET_DROPOUT,
            Arch::Resnet1d => RESNET_DROPOUT,
        })
    }

    /// Display name, e.g. `EEGNet8,2` or `ResNet1D-18`.
    pub fn display_name(&self) -> String {
        match self.arch {
            Arch::Eegnet => format!("EEGNet{},{}", self.temporal_filters, self.depth_multiplier),
            Arch::Resnet1d => format!("ResNet1D-{}", self.depth),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.in_channels == 0 {
            return bad("in_channels must be at least 1".into());
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if let Some(p) = self.dropout {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout {p} outside [0, 1)"));
            }
        }
        match self.arch {
            Arch::Eegnet if self.temporal_filters == 0 || self.depth_multiplier == 0 => {
                bad("EEGNet needs positive F1 and D".into())
            }
            Arch::Resnet1d if self.depth != 8 && self.depth != 18 => {
                bad(format!("unsupported ResNet1D depth {}, expected 8 or 18", self.depth))
            }
            _ => Ok(()),
        }
    }
}

/// Short CLI names: `eegnet4-2`, `eegnet8-2`, `resnet1d-8`, `resnet1d-18`.
impl FromStr for ModelConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("resnet1d-") {
            let depth = rest
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad model name `{s}`")))?;
            let cfg = ModelConfig::resnet1d(depth);
            cfg.validate()?;
            return Ok(cfg);
        }
        if let Some(rest) = lower.strip_prefix("eegnet") {
            let parsed = rest
                .split_once(['-', ','])
                .and_then(|(f, d)| Some((f.parse().ok()?, d.parse().ok()?)));
            if let Some((f1, d)) = parsed {
                let cfg = ModelConfig::eegnet(f1, d);
                cfg.validate()?;
                return Ok(cfg);
            }
        }
        Err(Error::InvalidArgument(format!(
            "unknown model `{s}` (expected eegnet4-2, eegnet8-2, resnet1d-8 or resnet1d-18)"
        )))
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_cli_names() {
        let m: ModelConfig = "eegnet4-2".parse().unwrap();
        assert_eq!((m.arch, m.temporal_filters, m.depth_multiplier), (Arch::Eegnet, 4, 2));
        assert_eq!(m.display_name(), "EEGNet4,2");
        let r: ModelConfig = "resnet1d-18".parse().unwrap();
        assert_eq!(r.display_name(), "ResNet1D-18");
        assert!("resnet1d-34".parse::<ModelConfig>().is_err());
        assert!("lstm".parse::<ModelConfig>().is_err());
    }

    #[test]
    fn defaults_match_corpus_geometry() {
        let r = ModelConfig::resnet1d(8);
        assert_eq!((r.in_channels, r.in_timesteps, r.n_classes), (32, 384, 2));
        assert_eq!(r.dropout_p(), RESNET_DROPOUT);
        assert_eq!(ModelConfig::eegnet(8, 2).dropout_p(), EEGNET_DROPOUT);
    }
}
