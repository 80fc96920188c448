//! Paired voltage and loading networks trained on the same inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ann::{init_model, train, Activation, AnnArchitecture, AnnModel, TrainConfig, TrainHistory};
use crate::dataset::TrainingData;
use crate::error::Result;
use crate::measurement::MeasurementSet;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub n_hidden_layers: usize,
    pub layer_size_multiplier: usize,
    pub hidden_width: Option<usize>,
    pub hidden_activation: Activation,
    pub voltage: TrainConfig,
    pub loading: TrainConfig,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            n_hidden_layers: 3,
            layer_size_multiplier: 1,
            hidden_width: None,
            hidden_activation: Activation::Relu,
            voltage: TrainConfig::default(),
            loading: TrainConfig::default(),
        }
    }
}

impl MonitorConfig {
    /// Same settings with both training seeds derived from `seed`.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.voltage.seed = seeds::derive(seed, seeds::Stream::Init, &[0]);
        self.loading.seed = seeds::derive(seed, seeds::Stream::Init, &[1]);
        self
    }

    fn arch(&self, n_in: usize, n_out: usize, n_switch: usize) -> AnnArchitecture {
        AnnArchitecture {
            n_hidden_layers: self.n_hidden_layers,
            layer_size_multiplier: self.layer_size_multiplier,
            hidden_width: self.hidden_width,
            hidden_activation: self.hidden_activation,
            ..AnnArchitecture::new(n_in, n_out).with_switch_inputs(n_switch)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnMonitor {
    pub voltage: AnnModel,
    pub loading: AnnModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorHistory {
    pub voltage: TrainHistory,
    pub loading: TrainHistory,
}

/// Estimated bus voltages (pu) and line loadings (fraction of rating).
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorEstimate {
    pub v_pu: Vec<f64>,
    pub loading: Vec<f64>,
    pub unseen_topology: bool,
}

fn train_one(data: &TrainingData, y: &[Vec<f64>], arch: AnnArchitecture, cfg: &TrainConfig) -> Result<(AnnModel, TrainHistory)> {
    let model = init_model(&arch, cfg.seed)?;
    let (mut model, history) = train(model, &data.x, y, cfg)?;
    model.spec_hash = Some(data.spec_hash.clone());
    Ok((model, history))
}

/// Trains both networks in parallel, each from its own seed.
pub fn train_monitor(data: &TrainingData, cfg: &MonitorConfig) -> Result<(AnnMonitor, MonitorHistory)> {
    let n_in = data.x.first().map_or(0, |r| r.len());
    let n_v = data.y_voltage.first().map_or(0, |r| r.len());
    let n_l = data.y_loading.first().map_or(0, |r| r.len());
    let (v, l) = rayon::join(
        || train_one(data, &data.y_voltage, cfg.arch(n_in, n_v, data.n_switch_inputs), &cfg.voltage),
        || train_one(data, &data.y_loading, cfg.arch(n_in, n_l, data.n_switch_inputs), &cfg.loading),
    );
    let (voltage, hv) = v?;
    let (loading, hl) = l?;
    Ok((AnnMonitor { voltage, loading }, MonitorHistory { voltage: hv, loading: hl }))
}

impl AnnMonitor {
    pub fn spec_hash(&self) -> Option<&str> {
        self.voltage.spec_hash.as_deref()
    }

    pub fn estimate(&self, ms: &MeasurementSet) -> Result<MonitorEstimate> {
        let v = self.voltage.predict(ms)?;
        let l = self.loading.predict(ms)?;
        Ok(MonitorEstimate {
            v_pu: v.values,
            loading: l.values,
            unseen_topology: v.unseen_topology,
        })
    }

    /// Writes `voltage.json` and `loading.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        self.voltage.save(dir.join("voltage.json"))?;
        self.loading.save(dir.join("loading.json"))
    }

    pub fn load(dir: impl AsRef<Path>, spec_hash: &str) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(AnnMonitor {
            voltage: AnnModel::load_for_spec(dir.join("voltage.json"), spec_hash)?,
            loading: AnnModel::load_for_spec(dir.join("loading.json"), spec_hash)?,
        })
    }
}
