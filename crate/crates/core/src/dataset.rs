//! Noise-free truth generation and estimator datasets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::measurement::{simulate, MeasurementSet, MeasurementSpec, SystemState};
use crate::scenario::{scenarios_hash, Scenario};
use crate::seeds::{self, Stream};

/// Difference between the estimators' line model and reality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpedanceError {
    /// The model holds `model_fraction` of the real R and X of these lines.
    Scaled { lines: Vec<usize>, model_fraction: f64 },
    /// Per scenario, every line's model fraction is drawn from `[low, high]`.
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthOptions {
    pub impedance: Option<ImpedanceError>,
    /// Real bus powers deviating from what the bus measurement reports.
    pub bus_scaling: Vec<(usize, f64)>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub scenario: usize,
    pub config: usize,
    pub state: SystemState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSet {
    pub records: Vec<TruthRecord>,
    pub configs: Vec<Vec<bool>>,
    /// Power flows that did not converge and were skipped.
    pub failed: usize,
    pub grid_hash: String,
    pub scenarios_hash: String,
}

impl TruthSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn failure_rate(&self) -> f64 {
        self.failed as f64 / (self.failed + self.records.len()).max(1) as f64
    }

    pub fn switch_states(&self, record: &TruthRecord) -> &[bool] {
        &self.configs[record.config]
    }
}

fn truth_grid(grid: &GridModel, opts: &TruthOptions, scenario: usize) -> Option<GridModel> {
    match &opts.impedance {
        None => None,
        Some(ImpedanceError::Scaled { lines, model_fraction }) => {
            let pairs: Vec<_> = lines.iter().map(|&l| (l, *model_fraction)).collect();
            Some(grid.with_actual_impedance(&pairs))
        }
        Some(ImpedanceError::Uniform { low, high }) => {
            let mut rng = seeds::rng(opts.seed, Stream::Topology, &[scenario as u64]);
            let pairs: Vec<_> = grid.lines.iter().map(|l| (l.id, rng.random_range(*low..=*high))).collect();
            Some(grid.with_actual_impedance(&pairs))
        }
    }
}

/// Solves the power flow of every scenario under every switch configuration.
/// Diverging cases are skipped and counted.
pub fn build_truth(grid: &GridModel, scenarios: &[Scenario], configs: &[Vec<bool>], opts: &TruthOptions) -> Result<TruthSet> {
    for c in configs {
        grid.apply_switch_config(c)?;
    }
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..configs.len()).map(move |c| (s, c)))
        .collect();
    let solved: Vec<Result<Option<TruthRecord>>> = jobs
        .par_iter()
        .map(|&(s, c)| {
            let perturbed = truth_grid(grid, opts, s);
            let g = perturbed.as_ref().unwrap_or(grid);
            let view = g.apply_switch_config(&configs[c])?;
            let scenario = if opts.bus_scaling.is_empty() {
                std::borrow::Cow::Borrowed(&scenarios[s])
            } else {
                std::borrow::Cow::Owned(scenarios[s].with_bus_scaling(g, &opts.bus_scaling))
            };
            match SystemState::solve(&view, &scenario.injections(g)) {
                Ok(state) => Ok(Some(TruthRecord {
                    scenario: s,
                    config: c,
                    state,
                })),
                Err(Error::Divergence { iterations, mismatch }) => {
                    log::warn!("scenario {s} config {c}: power flow diverged ({iterations} it, {mismatch:.2e})");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut records = Vec::with_capacity(jobs.len());
    let mut failed = 0;
    for r in solved {
        match r? {
            Some(rec) => records.push(rec),
            None => failed += 1,
        }
    }
    Ok(TruthSet {
        records,
        configs: configs.to_vec(),
        failed,
        grid_hash: grid.hash(),
        scenarios_hash: scenarios_hash(scenarios),
    })
}

/// Seed of the measurement noise for one truth record.
pub fn measurement_seed(seed: u64, record: &TruthRecord) -> u64 {
    seeds::derive(seed, Stream::Measurement, &[record.scenario as u64, record.config as u64])
}

/// Noisy measurements for one record. With bus scaling active, measurements
/// at scaled buses report the unscaled power.
pub fn measure(truth: &TruthSet, record: &TruthRecord, spec: &MeasurementSpec, bus_scaling: &[(usize, f64)], seed: u64) -> MeasurementSet {
    let mut ms = simulate(&record.state, spec, truth.switch_states(record), measurement_seed(seed, record));
    for &(bus, factor) in bus_scaling {
        for (v, e) in ms.values.iter_mut().zip(&spec.entries) {
            if e.kind.is_bus() && e.kind != crate::measurement::MeasKind::VBus && e.bus() == Some(bus) {
                *v /= factor;
            }
        }
    }
    ms
}

/// Estimator targets for one state: bus voltage magnitudes in pu and
/// monitored-line loadings as a fraction of rating.
pub fn targets(grid: &GridModel, state: &SystemState) -> (Vec<f64>, Vec<f64>) {
    (
        state.solution.v_mag_pu.clone(),
        state.solution.loading_fraction(&grid.monitored_lines()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingData {
    pub x: Vec<Vec<f64>>,
    pub y_voltage: Vec<Vec<f64>>,
    pub y_loading: Vec<Vec<f64>>,
    pub spec_hash: String,
    pub n_switch_inputs: usize,
}

impl TrainingData {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Noisy inputs with noise-free targets, one row per truth record.
pub fn build_training_set(grid: &GridModel, truth: &TruthSet, spec: &MeasurementSpec, seed: u64) -> Result<TrainingData> {
    spec.validate(grid)?;
    let mut data = TrainingData {
        x: Vec::with_capacity(truth.len()),
        y_voltage: Vec::with_capacity(truth.len()),
        y_loading: Vec::with_capacity(truth.len()),
        spec_hash: spec.hash(),
        n_switch_inputs: grid.switches.len(),
    };
    for rec in &truth.records {
        let ms = measure(truth, rec, spec, &[], seed);
        let (v, l) = targets(grid, &rec.state);
        data.x.push(ms.features());
        data.y_voltage.push(v);
        data.y_loading.push(l);
    }
    Ok(data)
}
