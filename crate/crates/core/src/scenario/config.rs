use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CellConfig, GnbId, UeId, UeProfile};
use crate::mac_sim::{ChannelModel, SimConfig, TrafficInterval, TrafficSchedule};
use crate::sla_xapp::PolicyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Det,
    Live,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Det => "det",
            Mode::Live => "live",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelChange {
    pub at_s: f64,
    pub bits_per_prb_per_slot: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub ue_id: u16,
    pub gbr_mbps: f64,
    #[serde(default = "one")]
    pub weight: f64,
    pub bits_per_prb_per_slot: u32,
    #[serde(default)]
    pub traffic: Vec<TrafficInterval>,
    /// Alternative schedule selected with the long timeline.
    #[serde(default)]
    pub paper_traffic: Vec<TrafficInterval>,
    #[serde(default)]
    pub channel_steps: Vec<ChannelChange>,
}

fn one() -> f64 {
    1.0
}

fn default_gnb() -> u32 {
    1
}

fn default_speed() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_gnb")]
    pub gnb_id: u32,
    #[serde(default)]
    pub cell: CellConfig,
    pub policy: PolicyKind,
    pub duration_s: f64,
    #[serde(default)]
    pub paper_duration_s: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_speed")]
    pub speed: f64,
    pub ues: Vec<UeConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Parse {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.gnb_id == 0 {
            return Err(invalid("gnb_id", "must be positive"));
        }
        self.cell.validate().map_err(|e| invalid("cell", e.to_string()))?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s", "must be a positive number of seconds"));
        }
        if let Some(d) = self.paper_duration_s {
            if !(d.is_finite() && d > 0.0) {
                return Err(invalid("paper_duration_s", "must be a positive number of seconds"));
            }
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(invalid("speed", "must be positive"));
        }
        if self.ues.is_empty() {
            return Err(invalid("ues", "at least one UE is required"));
        }
        for (i, ue) in self.ues.iter().enumerate() {
            let at = |f: &str| format!("ues[{i}].{f}");
            if self.ues[..i].iter().any(|u| u.ue_id == ue.ue_id) {
                return Err(invalid(at("ue_id"), format!("duplicate ue_id {}", ue.ue_id)));
            }
            if !(ue.gbr_mbps.is_finite() && ue.gbr_mbps >= 0.0) {
                return Err(invalid(at("gbr_mbps"), format!("must be >= 0, got {}", ue.gbr_mbps)));
            }
            if !(ue.weight.is_finite() && ue.weight > 0.0) {
                return Err(invalid(at("weight"), format!("must be > 0, got {}", ue.weight)));
            }
            if ue.bits_per_prb_per_slot == 0 {
                return Err(invalid(at("bits_per_prb_per_slot"), "must be positive"));
            }
            for (name, ivs, horizon) in [
                ("traffic", &ue.traffic, Some(self.duration_s)),
                ("paper_traffic", &ue.paper_traffic, self.paper_duration_s),
            ] {
                let mut prev_stop = 0.0;
                for (k, iv) in ivs.iter().enumerate() {
                    let field = at(&format!("{name}[{k}]"));
                    if !(iv.start_s >= prev_stop && iv.start_s < iv.stop_s) {
                        return Err(invalid(field, "intervals must be ordered, non-overlapping, start < stop"));
                    }
                    if horizon.is_some_and(|h| iv.stop_s > h + 1e-9) {
                        return Err(invalid(field, "interval runs past the scenario duration"));
                    }
                    prev_stop = iv.stop_s;
                }
            }
            let mut prev_at = 0.0;
            for (k, st) in ue.channel_steps.iter().enumerate() {
                let field = at(&format!("channel_steps[{k}]"));
                if !(st.at_s >= prev_at) || st.bits_per_prb_per_slot == 0 {
                    return Err(invalid(field, "steps must be time-ordered with positive rates"));
                }
                prev_at = st.at_s;
            }
        }
        if self.paper_duration_s.is_some() && self.ues.iter().all(|u| u.paper_traffic.is_empty()) {
            return Err(invalid("paper_duration_s", "set but no UE has paper_traffic"));
        }
        Ok(())
    }

    /// Switch to the long timeline: `paper_traffic` schedules and `paper_duration_s`.
    pub fn with_paper_timeline(mut self) -> Result<Self, ConfigError> {
        let Some(d) = self.paper_duration_s else {
            return Err(invalid("paper_duration_s", "required for the long timeline"));
        };
        self.duration_s = d;
        for ue in &mut self.ues {
            ue.traffic = std::mem::take(&mut ue.paper_traffic);
        }
        Ok(self)
    }

    pub fn gnb(&self) -> GnbId {
        GnbId(self.gnb_id)
    }

    pub fn profiles(&self) -> Vec<UeProfile> {
        self.ues
            .iter()
            .map(|u| UeProfile {
                ue_id: UeId(u.ue_id),
                gbr_mbps: u.gbr_mbps,
                weight: u.weight,
            })
            .collect()
    }

    pub fn traffic(&self) -> TrafficSchedule {
        TrafficSchedule {
            intervals: self
                .ues
                .iter()
                .filter(|u| !u.traffic.is_empty())
                .map(|u| (UeId(u.ue_id), u.traffic.clone()))
                .collect(),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let slot_us = f64::from(self.cell.slot_duration_us);
        let mut channel = ChannelModel::constant(self.ues.iter().map(|u| (UeId(u.ue_id), u.bits_per_prb_per_slot)));
        let mut steps: Vec<(u64, UeId, u32)> = self
            .ues
            .iter()
            .flat_map(|u| {
                u.channel_steps
                    .iter()
                    .map(move |s| ((s.at_s * 1e6 / slot_us).round() as u64, UeId(u.ue_id), s.bits_per_prb_per_slot))
            })
            .collect();
        steps.sort_by_key(|s| (s.0, s.1));
        for (slot, ue, bits) in steps {
            channel = channel.with_step(slot, ue, bits);
        }
        SimConfig {
            cell: self.cell,
            channel,
            traffic: self.traffic(),
        }
    }
}
