//! Run configuration: per-experiment defaults overlaid with a user file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossbar::ReadErrorModel;
use crate::device::DeviceParams;
use crate::error::{Result, SimError};
use crate::experiments::datasets::LetterGrids;
use crate::network::Network;
use crate::training::TrainConfig;

pub const EXPERIMENTS: [&str; 9] = [
    "zvn-train",
    "zvn-discharge",
    "circle-train",
    "circle-discharge",
    "circle-remind",
    "beta-study",
    "read-error-study",
    "calibrate-device",
    "build-map",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub sizes: Vec<usize>,
    /// One weight-scale factor per layer.
    pub betas: Vec<f64>,
    pub gamma: f64,
    pub bias: bool,
    pub init_std_v: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            sizes: vec![2, 4, 2, 1],
            betas: vec![2.0; 3],
            gamma: 0.1,
            bias: true,
            init_std_v: 0.8,
        }
    }
}

impl NetworkConfig {
    pub fn build(&self, params: &DeviceParams) -> Result<Network> {
        Network::new(&self.sizes, &self.betas, self.gamma, self.bias, params)
    }

    /// Same shape with every layer at weight-scale factor `beta`.
    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            betas: vec![beta; self.betas.len()],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DischargeConfig {
    pub duration_s: f64,
    pub eval_interval_s: f64,
    /// One discharge run per entry.
    pub oxygen_fracs: Vec<f64>,
    /// Times at which decision-boundary rasters are drawn.
    pub raster_times_s: Vec<f64>,
    /// Weight snapshot every this many evaluations (0 = none).
    pub snapshot_every: usize,
}

impl Default for DischargeConfig {
    fn default() -> Self {
        Self {
            duration_s: 1200.0,
            eval_interval_s: 20.0,
            oxygen_fracs: vec![1.0, 0.1],
            raster_times_s: vec![0.0, 600.0, 1200.0],
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReminderConfig {
    pub period_s: f64,
    /// Unattended discharge before the first reminder.
    pub initial_elapsed_s: f64,
    pub duration_s: f64,
    pub measurement: ReadErrorModel,
}

impl Default for ReminderConfig {
    fn default() -> Self {
        Self {
            period_s: 100.0,
            initial_elapsed_s: 1200.0,
            duration_s: 3600.0,
            measurement: ReadErrorModel::off(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub betas: Vec<f64>,
    pub runs: usize,
    pub read_std: f64,
    /// Epoch window `[start, end)` over which band widths are averaged.
    pub band_epochs: (usize, usize),
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            betas: vec![2.0, 4.0],
            runs: 3,
            read_std: 0.0025,
            band_epochs: (40, 60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub circle_points: usize,
    /// Fixed circle dataset seed; absent means the run seed is used.
    pub circle_seed: Option<u64>,
    pub letters: LetterGrids,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            circle_points: 100,
            circle_seed: None,
            letters: LetterGrids::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Number of consecutive seeds for multi-seed experiments.
    pub seeds: usize,
    pub device: DeviceParams,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub discharge: DischargeConfig,
    pub reminder: ReminderConfig,
    pub study: StudyConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 1,
            device: DeviceParams::default(),
            network: NetworkConfig::default(),
            train: circle_schedule(),
            discharge: DischargeConfig::default(),
            reminder: ReminderConfig::default(),
            study: StudyConfig::default(),
            data: DataConfig::default(),
        }
    }
}

/// Manhattan schedule that trains the 2-4-2-1 circle network in ≤ 150 epochs.
fn circle_schedule() -> TrainConfig {
    TrainConfig {
        epochs: 150,
        eta0: 0.4,
        decay: 0.6,
        step_epochs: 15,
        ..TrainConfig::default()
    }
}

fn zvn_network() -> NetworkConfig {
    NetworkConfig {
        sizes: vec![10, 3],
        betas: vec![1.0],
        gamma: 0.1,
        bias: false,
        init_std_v: 0.05,
    }
}

impl ExperimentConfig {
    /// Built-in configuration for a named experiment.
    pub fn defaults_for(experiment: &str) -> Result<Self> {
        let base = Self::default();
        let cfg = match experiment {
            "zvn-train" => Self {
                seeds: 5,
                network: zvn_network(),
                train: TrainConfig {
                    epochs: 30,
                    discharge_between_updates: true,
                    ..TrainConfig::default()
                },
                ..base
            },
            "zvn-discharge" => Self {
                seeds: 5,
                network: zvn_network(),
                train: TrainConfig {
                    epochs: 30,
                    discharge_between_updates: true,
                    ..TrainConfig::default()
                },
                discharge: DischargeConfig {
                    duration_s: 36_000.0,
                    eval_interval_s: 20.0,
                    oxygen_fracs: vec![1.0],
                    raster_times_s: Vec::new(),
                    snapshot_every: 90,
                },
                ..base
            },
            "circle-train" => Self { seeds: 5, ..base },
            "circle-discharge" | "circle-remind" | "calibrate-device" | "build-map" => base,
            "beta-study" => Self {
                study: StudyConfig {
                    band_epochs: (100, 150),
                    ..StudyConfig::default()
                },
                ..base
            },
            "read-error-study" => Self {
                train: TrainConfig {
                    epochs: 60,
                    discharge_between_updates: true,
                    ..TrainConfig::default()
                },
                ..base
            },
            other => return Err(SimError::UnknownExperiment(other.to_string())),
        };
        Ok(cfg)
    }

    /// Defaults for `experiment` overlaid with the tables in `text`.
    ///
    /// `text` is TOML, or JSON when `json` is set. A run manifest is accepted
    /// as well: its `config` object is used.
    pub fn overlay(experiment: &str, text: &str, json: bool) -> Result<Self> {
        let defaults = Self::defaults_for(experiment)?;
        let mut base = serde_json::to_value(&defaults).map_err(|e| SimError::Config(e.to_string()))?;
        let user: serde_json::Value = if json {
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?
        } else {
            let t: toml::Value = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| SimError::Config(e.to_string()))?
        };
        let user = match user {
            serde_json::Value::Object(mut m) if m.contains_key("config") && m.contains_key("experiment") => {
                m.remove("config").expect("checked")
            }
            v => v,
        };
        merge(&mut base, user);
        let cfg: Self = serde_json::from_value(base).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(experiment: &str, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::overlay(experiment, &text, json)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        self.device.validate()?;
        self.train.validate()?;
        if self.seeds == 0 {
            return bad("seeds must be ≥ 1");
        }
        if self.network.sizes.len() < 2 || self.network.betas.len() + 1 != self.network.sizes.len() {
            return bad("network needs ≥ 2 sizes and one beta per layer");
        }
        if !(self.network.init_std_v > 0.0) {
            return bad("init_std_v must be > 0");
        }
        let d = &self.discharge;
        if !(d.duration_s > 0.0 && d.eval_interval_s > 0.0) {
            return bad("discharge duration and interval must be > 0");
        }
        if d.oxygen_fracs.is_empty() || d.oxygen_fracs.iter().any(|o| !(0.0..=1.0).contains(o)) {
            return bad("oxygen_fracs must be non-empty and within [0, 1]");
        }
        let r = &self.reminder;
        if !(r.period_s > 0.0 && r.duration_s > 0.0 && r.initial_elapsed_s >= 0.0) {
            return bad("reminder period and duration must be > 0");
        }
        let s = &self.study;
        if s.betas.is_empty() || s.betas.iter().any(|b| !(*b >= 1.0)) || s.runs == 0 {
            return bad("study needs betas ≥ 1 and at least one run");
        }
        if !(s.read_std >= 0.0) || s.band_epochs.0 >= s.band_epochs.1 {
            return bad("study read_std must be ≥ 0 and band_epochs non-empty");
        }
        if self.data.circle_points == 0 {
            return bad("circle_points must be ≥ 1");
        }
        self.data.letters.validate()
    }

    pub fn circle_seed(&self, run_seed: u64) -> u64 {
        self.data.circle_seed.unwrap_or(run_seed)
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_has_valid_defaults() {
        for name in EXPERIMENTS {
            ExperimentConfig::defaults_for(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::defaults_for("nope").is_err());
    }

    #[test]
    fn overlay_keeps_untouched_defaults() {
        let text = "seed = 9\n[device]\noxygen_frac = 0.1\n[train]\nepochs = 12\n";
        let cfg = ExperimentConfig::overlay("zvn-train", text, false).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.device.oxygen_frac, 0.1);
        assert_eq!(cfg.device.k_shuttle, DeviceParams::default().k_shuttle);
        assert_eq!(cfg.train.epochs, 12);
        assert_eq!(cfg.network.sizes, vec![10, 3]);
    }

    #[test]
    fn overlay_rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::overlay("circle-train", "[network]\nwidth = 3\n", false).is_err());
        assert!(ExperimentConfig::overlay("circle-train", "[device]\noxygen_frac = 2.0\n", false).is_err());
        assert!(ExperimentConfig::overlay("circle-train", "seeds = 0\n", false).is_err());
    }

    #[test]
    fn manifest_config_is_reloadable() {
        let cfg = ExperimentConfig::defaults_for("circle-remind").unwrap();
        let manifest = serde_json::json!({ "experiment": "circle-remind", "config": cfg });
        let back = ExperimentConfig::overlay("circle-remind", &manifest.to_string(), true).unwrap();
        assert_eq!(back, cfg);
    }
}
