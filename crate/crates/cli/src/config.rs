//! Run configuration: one schema shared by config files, command-line flags
//! and the echo written into every output.
//!
//! Precedence is built-in defaults, then the config file, then flags.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use tautransit::control::Orientation;
use tautransit::dubins::{EdgePolicy, HeadingMode};
use tautransit::sim::TauSource;

use crate::error::CliError;

/// Prefix of the config echo line at the top of CSV outputs.
pub const ECHO_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FlyKind {
    Gate,
    Circle,
    Clutter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "FieldSection::is_empty")]
    pub field: FieldSection,
    #[serde(skip_serializing_if = "GridSection::is_empty")]
    pub grid: GridSection,
    #[serde(skip_serializing_if = "ProtocolSection::is_empty")]
    pub protocol: ProtocolSection,
    #[serde(skip_serializing_if = "FlySection::is_empty")]
    pub fly: FlySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// `[start, stop, step]`, expanded into `theta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_range: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<EdgePolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading_mode: Option<HeadingMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clearance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FlySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<FlyKind>,
    /// `[x, y, theta]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_cap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_source: Option<TauSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Orientation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    /// Field document to fly through; generated from `[field]` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_half_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_acq: Option<f64>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),+) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )+
    };
}

impl FieldSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl GridSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl ProtocolSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl FlySection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl Config {
    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Config) -> Config {
        overlay_fields!(self, top, command, seed, format);
        overlay_fields!(self.field, top.field, alpha, beta, gamma, rows, extent, jitter);
        if top.grid.theta.is_some() || top.grid.theta_range.is_some() {
            self.grid.theta = top.grid.theta;
            self.grid.theta_range = top.grid.theta_range;
        }
        overlay_fields!(self.grid, top.grid, n);
        overlay_fields!(self.protocol, top.protocol, trials, policy, heading_mode, clearance);
        overlay_fields!(
            self.fly,
            top.fly,
            kind,
            start,
            dt,
            t_max,
            left,
            right,
            epsilon,
            v_cap,
            tau_source,
            half_window,
            goal,
            lambda,
            standoff,
            orientation,
            stop_tol,
            record_every,
            field_file,
            view_half_angle,
            omega_acq
        );
        self
    }

    /// Single-line JSON used as the provenance echo.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config always serializes")
    }
}

/// Reads a config file. Accepts TOML, or any output of this tool: a CSV
/// whose first line is a config echo, or a JSON document with a `config` key.
pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    if let Some(rest) = text.lines().next().and_then(|l| l.strip_prefix(ECHO_PREFIX)) {
        return serde_json::from_str(rest).map_err(|e| bad(e.to_string()));
    }
    if text.trim_start().starts_with('{') {
        let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let cfg = doc.get("config").cloned().ok_or_else(|| bad("JSON input has no config key".into()))?;
        return serde_json::from_value(cfg).map_err(|e| bad(e.to_string()));
    }
    toml::from_str(&text).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_top() {
        let mut base = Config::default();
        base.seed = Some(1);
        base.field.alpha = Some(2.0);
        base.grid.theta_range = Some([0.0, 0.1, 0.05]);
        let mut top = Config::default();
        top.seed = Some(9);
        top.grid.theta = Some(vec![0.3]);
        let m = base.overlay(top);
        assert_eq!(m.seed, Some(9));
        assert_eq!(m.field.alpha, Some(2.0));
        assert_eq!((m.grid.theta, m.grid.theta_range), (Some(vec![0.3]), None));
    }

    #[test]
    fn toml_and_echo_share_schema() {
        let cfg: Config = toml::from_str(
            "seed = 4\nformat = \"json\"\n[field]\nalpha = 1.0\nextent = [-5.0, 5.0]\n[protocol]\npolicy = \"nearest\"\n",
        )
        .unwrap();
        assert_eq!(cfg.protocol.policy, Some(EdgePolicy::Nearest));
        let back: Config = serde_json::from_str(&cfg.echo()).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<Config>("[field]\nalpah = 1.0\n").is_err());
    }
}
