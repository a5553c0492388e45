//! Run configuration: `key = value` lines grouped in sections, merged with command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct General {
    pub h: Option<f64>,
    pub eps: Option<f64>,
    pub bits: Option<u32>,
    pub out: Option<String>,
    pub jobs: Option<usize>,
    pub verbose: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inner {
    /// Fourier depth Y.
    pub depth: Option<f64>,
    /// Initial Gauss-Legendre nodes for the Fourier integral.
    pub nodes: Option<usize>,
    pub r_seed: Option<f64>,
    pub im_min: Option<f64>,
    pub im_max: Option<f64>,
    pub im_step: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub general: General,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub inner: Inner,
}

/// Documented keys, shown in --help.
pub const KEYS: &str = "\
config keys (file given with --config; flags override):
  [general] h, eps, bits, out, jobs, verbose
  [sweep]   grid = [0.2, 0.17, ...]
  [inner]   depth, nodes, r_seed, im_min, im_max, im_step";

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.general.out.clone().unwrap_or_else(|| "out".to_string()))
    }

    /// Exactly one of h or eps, as (h, eps).
    pub fn parameter(&self) -> Result<(Option<f64>, Option<f64>), String> {
        match (self.general.h, self.general.eps) {
            (Some(_), Some(_)) => Err("give either --h or --eps, not both".into()),
            (None, None) => Err("this subcommand needs --h or --eps".into()),
            (h, e) => Ok((h, e)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.general.h.is_some() && self.general.eps.is_some() {
            return Err("give either --h or --eps, not both".into());
        }
        if let Some(h) = self.general.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(format!("h must be positive, got {h}"));
            }
        }
        if let Some(e) = self.general.eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(format!("eps must be positive, got {e}"));
            }
        }
        if let Some(b) = self.general.bits {
            if b < 64 {
                return Err(format!("bits must be at least 64, got {b}"));
            }
        }
        if let Some(0) = self.general.jobs {
            return Err("jobs must be at least 1".into());
        }
        Ok(())
    }
}
