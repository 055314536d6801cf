//! Run configuration: a JSON file plus command-line overrides.
//!
//! Unknown keys are rejected. The truncation depth `L` is either a number or the
//! string `"auto"`, in which case it is resolved from `tail_tolerance`. The
//! *effective* configuration has `L` filled in; re-loading it reproduces it exactly.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomposition::{relative_drh_tail, resolve_depth, DepthResolution};
use crate::error::{Error, Result};
use crate::grid::{PastSpacing, TimeGrid};
use crate::hurst::HurstParams;
use crate::optimizer::MarketParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// Truncation depth: a fixed `L` or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Depth {
    Fixed(f64),
    Auto(AutoKeyword),
}

impl Default for Depth {
    fn default() -> Self {
        Depth::Auto(AutoKeyword::Auto)
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Fixed(v) => write!(f, "{v}"),
            Depth::Auto(_) => f.write_str("auto"),
        }
    }
}

impl std::str::FromStr for Depth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Depth::default());
        }
        s.parse::<f64>()
            .map(Depth::Fixed)
            .map_err(|_| Error::Config(format!("L must be a number or \"auto\", got `{s}`")))
    }
}

fn default_h() -> f64 {
    0.75
}
fn default_horizon() -> f64 {
    1.0
}
fn default_n_past() -> usize {
    2000
}
fn default_n_future() -> usize {
    200
}
fn default_mu() -> f64 {
    0.1
}
fn default_one() -> f64 {
    1.0
}
fn default_k() -> f64 {
    0.1
}
fn default_seed() -> u64 {
    20240501
}
fn default_replicas() -> usize {
    1000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_tail_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "H", default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(rename = "L", default)]
    pub depth: Depth,
    #[serde(default = "default_n_past")]
    pub n_past: usize,
    #[serde(default = "default_n_future")]
    pub n_future: usize,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_one")]
    pub sigma: f64,
    #[serde(default = "default_one")]
    pub lambda: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_one")]
    pub x0: f64,
    #[serde(default = "default_one")]
    pub s0: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Where outputs go. Read but never emitted: it does not affect results.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub past_spacing: PastSpacing,
    /// Relative `DR_H(T)` tail budget used to resolve `L = "auto"` and by the truncation check.
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    /// Worker threads; `None` lets the pool decide. Read but never emitted.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    /// Verification checks to run; `None` runs the full registry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Command-line overrides; every `Some` replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub h: Option<f64>,
    pub horizon: Option<f64>,
    pub lambda: Option<f64>,
    pub k: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:ident, $src:ident) => {
                if let Some(v) = o.$src.clone() {
                    self.$field = v;
                }
            };
        }
        set!(seed, seed);
        set!(replicas, replicas);
        set!(output_dir, output_dir);
        set!(h, h);
        set!(horizon, horizon);
        set!(lambda, lambda);
        set!(k, k);
        set!(mu, mu);
        set!(sigma, sigma);
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    pub fn validate(&self) -> Result<()> {
        HurstParams::new(self.h).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.s.is_finite() && self.horizon.is_finite()) {
            return invalid("s and T must be finite");
        }
        if !(self.horizon > self.s) {
            return invalid(format!("T = {} must exceed s = {}", self.horizon, self.s));
        }
        if let Depth::Fixed(l) = self.depth {
            if !(l.is_finite() && l > 0.0) {
                return invalid(format!("L must be positive and finite, got {l}"));
            }
        }
        if self.n_past < 1 {
            return invalid("n_past must be at least 1");
        }
        if self.n_future < 2 {
            return invalid("n_future must be at least 2");
        }
        self.market().map_err(|e| Error::Config(e.to_string()))?;
        if self.replicas < 1 {
            return invalid("replicas ≥ 1 required");
        }
        if !(self.tail_tolerance > 0.0 && self.tail_tolerance < 1.0) {
            return invalid(format!("tail_tolerance must lie in (0, 1), got {}", self.tail_tolerance));
        }
        if self.threads == Some(0) {
            return invalid("threads must be at least 1");
        }
        for id in self.checks.iter().flatten() {
            if !crate::verify::CHECK_IDS.contains(&id.as_str()) {
                return invalid(format!("unknown check id `{id}`"));
            }
        }
        Ok(())
    }

    pub fn hurst(&self) -> Result<HurstParams> {
        HurstParams::new(self.h)
    }

    pub fn market(&self) -> Result<MarketParams> {
        MarketParams::new(self.mu, self.sigma, self.lambda, self.k, self.s0, self.x0)
    }

    /// Resolved depth and the relative `DR_H(T)` tail it leaves.
    pub fn depth_resolution(&self) -> Result<DepthResolution> {
        let params = self.hurst()?;
        match self.depth {
            Depth::Auto(_) => resolve_depth(self.s, self.horizon, &params, self.tail_tolerance),
            Depth::Fixed(depth) => Ok(DepthResolution {
                depth,
                relative_tail: relative_drh_tail(self.s, self.horizon, depth, &params)?,
                capped: false,
            }),
        }
    }

    /// Validated copy with `L` resolved to a number.
    pub fn effective(&self) -> Result<RunConfig> {
        self.validate()?;
        let mut out = self.clone();
        out.depth = Depth::Fixed(self.depth_resolution()?.depth);
        Ok(out)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let depth = self.depth_resolution()?.depth;
        TimeGrid::new(self.s, self.horizon, depth, self.n_past, self.n_future, self.past_spacing)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the emitted effective configuration (so `threads` and `output_dir`
    /// do not enter).
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(&self.effective()?)?;
        let digest = Sha256::digest(&bytes);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
