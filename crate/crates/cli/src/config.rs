//! Run configuration: a flat TOML file with one optional `[time]` and one
//! optional `[gate]` section.
//!
//! ```toml
//! command = "spatial_study"
//! k = 1
//! mu = 0.1
//! kappa = 1e-4            # or "random(42)"
//! alpha = 1.0
//! levels = [4, 8, 16, 32]
//!
//! [time]
//! T = 0.1
//! dt = "0.8*h^(k+1)"      # or N = 100, or N = [8, 16, 32, 64]
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use hdg_core::mesh::Splitting;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Highest polynomial degree accepted from a configuration.
pub const MAX_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Command {
    SpatialStudy,
    TemporalStudy,
    Invariants,
    Subsurface,
    Probe,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::SpatialStudy => "spatial_study",
            Command::TemporalStudy => "temporal_study",
            Command::Invariants => "invariants",
            Command::Subsurface => "subsurface",
            Command::Probe => "probe",
        };
        f.write_str(s)
    }
}

/// Permeability: one value everywhere or a per-cell random field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KappaRepr", into = "KappaRepr")]
pub enum KappaSetting {
    Constant(f64),
    Random { seed: u64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KappaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<KappaRepr> for KappaSetting {
    type Error = String;

    fn try_from(r: KappaRepr) -> Result<Self, String> {
        match r {
            KappaRepr::Number(v) => Ok(KappaSetting::Constant(v)),
            KappaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<KappaSetting> for KappaRepr {
    fn from(k: KappaSetting) -> Self {
        match k {
            KappaSetting::Constant(v) => KappaRepr::Number(v),
            KappaSetting::Random { seed } => KappaRepr::Text(format!("random({seed})")),
        }
    }
}

impl FromStr for KappaSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        if let Some(inner) = t.strip_prefix("random(").and_then(|r| r.strip_suffix(')')) {
            let seed = inner.trim().parse().map_err(|_| format!("bad seed in {t:?}"))?;
            return Ok(KappaSetting::Random { seed });
        }
        t.parse::<f64>()
            .map(KappaSetting::Constant)
            .map_err(|_| format!("kappa must be a number or \"random(<seed>)\", got {t:?}"))
    }
}

/// Step count: one value, or a list for temporal studies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepCount {
    One(usize),
    Many(Vec<usize>),
}

impl StepCount {
    pub fn as_slice(&self) -> &[usize] {
        match self {
            StepCount::One(n) => std::slice::from_ref(n),
            StepCount::Many(v) => v,
        }
    }
}

/// `dt = factor * h^(k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DtRule {
    pub factor: f64,
}

impl TryFrom<String> for DtRule {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let factor = compact
            .strip_suffix("*h^(k+1)")
            .ok_or_else(|| format!("time step rule must read \"<factor>*h^(k+1)\", got {s:?}"))?;
        let factor: f64 = factor.parse().map_err(|_| format!("bad factor in time step rule {s:?}"))?;
        Ok(DtRule { factor })
    }
}

impl From<DtRule> for String {
    fn from(r: DtRule) -> String {
        format!("{:?}*h^(k+1)", r.factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<StepCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<DtRule>,
}

/// Acceptance thresholds; a violation exits with the gate status.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_rate: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_rate: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_rate: Option<[f64; 2]>,
    /// Largest relative conservation defect allowed at any time level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub k: usize,
    pub mu: f64,
    pub kappa: KappaSetting,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Free-flow cell rows of each mesh.
    pub levels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    /// Interface polyline `"x,y; x,y; ..."` for the subsurface run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Diagonal pattern of the structured meshes.
    #[serde(default)]
    pub splitting: Splitting,
    /// Snapshot stride in steps; 0 writes no snapshots.
    #[serde(default)]
    pub vtk_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateConfig>,
}

fn default_alpha() -> f64 {
    1.0
}

/// Parse `"x,y; x,y; ..."` into vertices. Empty segments are rejected.
pub fn parse_polyline(text: &str) -> Result<Vec<[f64; 2]>, CliError> {
    let bad = |m: String| CliError::Config(format!("interface polyline: {m}"));
    let mut out = Vec::new();
    for (i, vertex) in text.split(';').enumerate() {
        let vertex = vertex.trim();
        if vertex.is_empty() {
            return Err(bad(format!("vertex {i} is empty")));
        }
        let (x, y) = vertex
            .split_once(',')
            .ok_or_else(|| bad(format!("vertex {i} ({vertex:?}) is not \"x,y\"")))?;
        let coord = |s: &str| -> Result<f64, CliError> {
            let v: f64 = s.trim().parse().map_err(|_| bad(format!("vertex {i}: bad number {:?}", s.trim())))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("vertex {i}: coordinates must be finite")))
            }
        };
        out.push([coord(x)?, coord(y)?]);
    }
    if out.len() < 2 {
        return Err(bad("needs at least two vertices".into()));
    }
    Ok(out)
}

pub fn format_polyline(poly: &[[f64; 2]]) -> String {
    poly.iter().map(|p| format!("{:?},{:?}", p[0], p[1])).collect::<Vec<_>>().join("; ")
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be a positive finite number (got {v})")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn time(&self) -> Result<&TimeConfig, CliError> {
        self.time
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{} needs a [time] section", self.command)))
    }

    /// Parsed interface polyline, if one is configured.
    pub fn polyline(&self) -> Result<Option<Vec<[f64; 2]>>, CliError> {
        self.interface.as_deref().map(parse_polyline).transpose()
    }

    /// Checks everything that does not need a mesh.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |m: String| Err(CliError::Config(m));
        if !(1..=MAX_K).contains(&self.k) {
            return cfg_err(format!("k must lie in 1..={MAX_K} (got {})", self.k));
        }
        positive("mu", self.mu)?;
        positive("alpha", self.alpha)?;
        if let Some(b) = self.beta {
            positive("beta", b)?;
        }
        if let KappaSetting::Constant(v) = self.kappa {
            positive("kappa", v)?;
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return cfg_err("levels must be a nonempty list of positive row counts".into());
        }
        self.polyline()?;
        let manufactured = matches!(self.command, Command::SpatialStudy | Command::TemporalStudy | Command::Invariants);
        if manufactured && matches!(self.kappa, KappaSetting::Random { .. }) {
            return cfg_err(format!("{} uses the manufactured solution and needs a constant kappa", self.command));
        }
        if let Some(t) = &self.time {
            positive("T", t.t_final)?;
            match (&t.steps, &t.dt) {
                (Some(_), Some(_)) => return cfg_err("give either N or dt in [time], not both".into()),
                (None, None) => return cfg_err("[time] needs N or dt".into()),
                (Some(n), None) => {
                    if n.as_slice().is_empty() || n.as_slice().contains(&0) {
                        return cfg_err("N must be positive".into());
                    }
                }
                (None, Some(rule)) => positive("time step factor", rule.factor)?,
            }
        }
        if let Some(g) = &self.gate {
            for (name, r) in [("energy_rate", g.energy_rate), ("velocity_rate", g.velocity_rate), ("pressure_rate", g.pressure_rate)] {
                if let Some([lo, hi]) = r {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return cfg_err(format!("gate {name} must be an ordered pair of finite numbers"));
                    }
                }
            }
            if let Some(c) = g.conservation {
                positive("gate conservation", c)?;
            }
        }
        let single_steps = |what: &str| -> Result<(), CliError> {
            match &self.time()?.steps {
                Some(StepCount::Many(v)) if v.len() != 1 => Err(CliError::Config(format!("{what} takes a single N"))),
                _ => Ok(()),
            }
        };
        match self.command {
            Command::SpatialStudy | Command::Invariants => {
                if self.levels.len() < 2 {
                    return cfg_err(format!("{} needs at least two levels", self.command));
                }
                if self.levels.windows(2).any(|w| w[1] <= w[0]) {
                    return cfg_err(format!("{} levels must increase strictly", self.command));
                }
                single_steps(&self.command.to_string())?;
            }
            Command::TemporalStudy => {
                if self.levels.len() != 1 {
                    return cfg_err("temporal_study runs on exactly one level".into());
                }
                let t = self.time()?;
                let steps = t
                    .steps
                    .as_ref()
                    .ok_or_else(|| CliError::Config("temporal_study needs a list of step counts N".into()))?;
                if steps.as_slice().windows(2).any(|w| w[1] <= w[0]) {
                    return cfg_err("temporal_study step counts must increase strictly".into());
                }
            }
            Command::Subsurface => {
                if self.levels.len() != 1 {
                    return cfg_err("subsurface runs on exactly one level".into());
                }
                single_steps("subsurface")?;
            }
            Command::Probe => {}
        }
        Ok(())
    }
}
