//! Scenario configuration: TOML schema, defaults, validation and the flat
//! `key value` echo used in STAT headers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AttackKind, AttackProfile};
use crate::aodv::AodvConfig;
use crate::field::{Point, SpeedRange, Terrain};
use crate::medium::MediumConfig;
use crate::packet;
use crate::sdaodv::SdaodvConfig;
use crate::sim::RNG_ALGORITHM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Aodv,
    Sdaodv,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Aodv, Protocol::Sdaodv];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Aodv => "aodv",
            Protocol::Sdaodv => "sdaodv",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        Protocol::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementKind {
    Uniform,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementConfig {
    pub kind: PlacementKind,
    /// `[x, y]` per node when `kind = "explicit"`.
    pub positions: Vec<[f64; 2]>,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig { kind: PlacementKind::Uniform, positions: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MobilityModel {
    Waypoint,
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Seconds between position updates.
    pub tick: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig { model: MobilityModel::Waypoint, speed_min: 5.0, speed_max: 20.0, tick: 0.1 }
    }
}

impl MobilityConfig {
    pub fn speeds(&self) -> SpeedRange {
        SpeedRange { min: self.speed_min, max: self.speed_max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub flows: usize,
    /// Packets per second per flow.
    pub rate: f64,
    pub packet_size: u32,
    pub start: f64,
    pub stop: f64,
    /// Explicit `[src, dest]` pairs; overrides random endpoint selection.
    pub pairs: Vec<[u32; 2]>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig { flows: 10, rate: 4.0, packet_size: 512, start: 1.0, stop: 99.0, pairs: Vec::new() }
    }
}

impl TrafficConfig {
    pub fn interval(&self) -> f64 {
        1.0 / self.rate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub node_count: usize,
    /// Seconds.
    pub sim_duration: f64,
    pub protocol: Protocol,
    pub terrain: Terrain,
    pub placement: PlacementConfig,
    pub mobility: MobilityConfig,
    pub medium: MediumConfig,
    pub traffic: TrafficConfig,
    pub aodv: AodvConfig,
    pub sdaodv: SdaodvConfig,
    pub attack: Option<AttackProfile>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            node_count: 50,
            sim_duration: 100.0,
            protocol: Protocol::Aodv,
            terrain: Terrain::default(),
            placement: PlacementConfig::default(),
            mobility: MobilityConfig::default(),
            medium: MediumConfig::default(),
            traffic: TrafficConfig::default(),
            aodv: AodvConfig::default(),
            sdaodv: SdaodvConfig::default(),
            attack: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown key `{path}`{}", .suggestion.as_ref().map(|s| format!(", did you mean `{s}`?")).unwrap_or_default())]
    UnknownKey { path: String, suggestion: Option<String> },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        check_keys(&value)?;
        let cfg: ScenarioConfig =
            toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        ScenarioConfig::from_toml_str(&text)
    }

    /// TOML has no unsigned integers, so seeds above `i64::MAX` are written
    /// as-is and will not load back.
    pub fn to_toml_string(&self) -> String {
        let masked = ScenarioConfig { seed: 0, ..self.clone() };
        let text = toml::to_string(&masked).expect("config serialises");
        text.replacen("seed = 0\n", &format!("seed = {}\n", self.seed), 1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 { Ok(()) } else { Err(invalid(field, format!("must be > 0, got {v}"))) }
        };
        if self.node_count == 0 {
            return Err(invalid("node_count", "must be at least 1"));
        }
        if !(self.sim_duration.is_finite() && self.sim_duration >= 0.0) {
            return Err(invalid("sim_duration", "must be >= 0"));
        }
        positive("terrain.width", self.terrain.width)?;
        positive("terrain.height", self.terrain.height)?;
        positive("medium.bandwidth", self.medium.bandwidth)?;
        positive("medium.range", self.medium.range)?;
        if self.medium.mac_overhead.is_nan() || self.medium.mac_overhead < 0.0 {
            return Err(invalid("medium.mac_overhead", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.medium.loss_probability) {
            return Err(invalid("medium.loss_probability", "must lie in [0, 1]"));
        }
        positive("mobility.tick", self.mobility.tick)?;
        positive("mobility.speed_min", self.mobility.speed_min)?;
        if self.mobility.speed_max < self.mobility.speed_min {
            return Err(invalid("mobility.speed_max", "must be >= speed_min"));
        }
        positive("traffic.rate", self.traffic.rate)?;
        if self.traffic.packet_size == 0 {
            return Err(invalid("traffic.packet_size", "must be at least 1"));
        }
        if self.traffic.start < 0.0 {
            return Err(invalid("traffic.start", "must be >= 0"));
        }
        positive("aodv.route_lifetime", self.aodv.route_lifetime)?;
        positive("aodv.seen_cache_expiry", self.aodv.seen_cache_expiry)?;
        positive("aodv.discovery_timeout", self.aodv.discovery_timeout)?;
        if self.aodv.buffer_capacity == 0 {
            return Err(invalid("aodv.buffer_capacity", "must be at least 1"));
        }
        positive("sdaodv.probe_timeout", self.sdaodv.probe_timeout)?;
        if self.placement.kind == PlacementKind::Explicit {
            if self.placement.positions.len() != self.node_count {
                return Err(invalid(
                    "placement.positions",
                    format!("{} positions for {} nodes", self.placement.positions.len(), self.node_count),
                ));
            }
            for &[x, y] in &self.placement.positions {
                if !self.terrain.contains(Point::new(x, y)) {
                    return Err(invalid("placement.positions", format!("({x}, {y}) lies outside the terrain")));
                }
            }
        }
        for &[s, d] in &self.traffic.pairs {
            if s as usize >= self.node_count || d as usize >= self.node_count || s == d {
                return Err(invalid("traffic.pairs", format!("[{s}, {d}] is not a pair of distinct nodes")));
            }
        }
        if self.traffic.pairs.is_empty() && self.traffic.flows > 0 && self.node_count < 2 {
            return Err(invalid("traffic.flows", "needs at least two nodes"));
        }
        if let Some(a) = &self.attack {
            if a.nodes.is_empty() && !(a.malicious_fraction > 0.0 && a.malicious_fraction < 100.0) {
                return Err(invalid("attack.malicious_fraction", "must lie strictly between 0 and 100"));
            }
            if !a.tunnel_pairs.is_empty() && a.kind != AttackKind::Wormhole {
                return Err(invalid("attack.tunnel_pairs", "only meaningful for wormhole attacks"));
            }
        }
        Ok(())
    }

    /// Every setting and model constant that shapes the event trace, as
    /// `(dotted key, value)` pairs in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let masked = ScenarioConfig { seed: 0, ..self.clone() };
        let value = toml::Value::try_from(&masked).expect("config serialises");
        flatten("", &value, &mut out);
        if let Some(entry) = out.iter_mut().find(|(k, _)| k == "seed") {
            entry.1 = self.seed.to_string();
        }
        if self.attack.is_none() {
            out.push(("attack".into(), "none".into()));
        }
        let constants: [(&str, String); 12] = [
            ("const.rreq_bytes", packet::RREQ_BYTES.to_string()),
            ("const.rrep_bytes", packet::RREP_BYTES.to_string()),
            ("const.rerr_bytes", packet::RERR_BYTES.to_string()),
            ("const.rerr_extra_dest_bytes", packet::RERR_EXTRA_DEST_BYTES.to_string()),
            ("const.digest_field_bytes", packet::DIGEST_FIELD_BYTES.to_string()),
            ("const.exclude_entry_bytes", packet::EXCLUDE_ENTRY_BYTES.to_string()),
            ("const.probe_bytes", packet::PROBE_BYTES.to_string()),
            ("const.pause_time", "0".into()),
            ("const.rng", RNG_ALGORITHM.into()),
            ("const.medium_model", "unit-disk, per-node fifo interface, no collisions".into()),
            ("const.digest", "sha1(dest_id as u32 big-endian)".into()),
            ("const.time_resolution", "1us".into()),
        ];
        out.extend(constants.into_iter().map(|(k, v)| (k.to_string(), v)));
        out
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        toml::Value::Float(f) => out.push((prefix.to_string(), format!("{f:?}"))),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Walks user keys against the full schema so a typo is reported with the
/// nearest valid spelling.
fn check_keys(user: &toml::Table) -> Result<(), ConfigError> {
    let schema_cfg = ScenarioConfig { attack: Some(AttackProfile::default()), ..ScenarioConfig::default() };
    let schema = toml::Table::try_from(&schema_cfg).expect("config serialises");
    walk(user, &schema, "")
}

fn walk(user: &toml::Table, schema: &toml::Table, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match schema.get(k) {
            None => {
                let suggestion = schema
                    .keys()
                    .map(|cand| (strsim::jaro_winkler(k, cand), cand))
                    .filter(|(score, _)| *score > 0.8)
                    .max_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, cand)| if prefix.is_empty() { cand.clone() } else { format!("{prefix}.{cand}") });
                return Err(ConfigError::UnknownKey { path, suggestion });
            }
            Some(toml::Value::Table(sub)) => match v {
                toml::Value::Table(u) => walk(u, sub, &path)?,
                _ => return Err(invalid(&path, "expected a table")),
            },
            Some(_) => {}
        }
    }
    Ok(())
}
