//! End-to-end runs: scenario generation, truth caching, training,
//! evaluation, architecture sweeps and the baseline comparisons.
//!
//! All artifacts live below the run's output directory:
//!
//! ```text
//! scenarios_train.csv, scenarios_test.csv   generated unit powers
//! truth/<key>.json                          cached power-flow solutions
//! models/<spec>/{voltage,loading}.json      trained monitors
//! models/<spec>/history.csv                 per-epoch losses
//! results/<case>.csv                        per-scenario errors
//! errors/<case>_{bus,line}.csv              per-element error statistics
//! summary.csv                               success rates per case and method
//! tune.csv, tune_times.txt                  architecture sweep
//! ```
//!
//! Every CSV starts with a `# config_hash=..., seed=...` comment line.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ann::{Activation, Optimizer};
use crate::catalog::{Catalog, TestCase};
use crate::correction::CorrectionConfig;
use crate::dataset::{build_training_set, build_truth, TruthOptions, TruthSet};
use crate::error::{Error, Result};
use crate::evaluation::{error_stats, run_test_case, ErrorRow, EvalContext, EvalResult, Method};
use crate::grid::GridModel;
use crate::hash::digest_hex;
use crate::measurement::MeasurementSpec;
use crate::monitor::{train_monitor, AnnMonitor, MonitorConfig, MonitorHistory};
use crate::scenario::{default_axes, expand, export_scenarios, generate_set, import_scenarios, Scenario, ScenarioAxis, ScenarioTuple};
use crate::seeds::{self, Stream};
use crate::wls::WlsConfig;

pub const BUNDLED_GRID: &str = include_str!("../data/cigre_mv_modified.toml");
pub const BUNDLED_CASES: &str = include_str!("../data/cigre_cases.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Grid file; the bundled CIGRE grid when absent.
    pub grid: Option<PathBuf>,
    /// Test-case catalog; the bundled CIGRE catalog when absent.
    pub cases_file: Option<PathBuf>,
    pub seed: u64,
    pub axes: Vec<ScenarioAxis>,
    pub train_repetitions: usize,
    pub test_repetitions: usize,
    /// Replay these scenarios as the test set instead of generating them.
    pub test_scenarios: Option<PathBuf>,
    /// Case ids; every catalog case when empty.
    pub cases: Vec<String>,
    pub methods: Vec<Method>,
    pub v_correction: bool,
    pub out: PathBuf,
    /// Worker threads; all cores when absent. Results do not depend on it.
    pub jobs: Option<usize>,
    /// Largest tolerated share of diverging truth power flows.
    pub failure_budget: f64,
    pub monitor: MonitorConfig,
    pub wls: WlsConfig,
    pub correction: CorrectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: None,
            cases_file: None,
            seed: 1,
            axes: default_axes(),
            train_repetitions: 3,
            test_repetitions: 1,
            test_scenarios: None,
            cases: Vec::new(),
            methods: vec![Method::Ann, Method::Wls],
            v_correction: false,
            out: PathBuf::from("out"),
            jobs: None,
            failure_budget: 0.01,
            monitor: MonitorConfig::default(),
            wls: WlsConfig::default(),
            correction: CorrectionConfig::default(),
        }
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

impl RunConfig {
    /// Applies the keys present in a TOML config file on top of `self`.
    pub fn with_overrides(self, text: &str, context: &str) -> Result<Self> {
        let over: toml::Value = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        let over = serde_json::to_value(over).map_err(|e| Error::parse(context, e))?;
        let mut base = serde_json::to_value(&self).map_err(|e| Error::parse(context, e))?;
        merge(&mut base, over);
        serde_json::from_value(base).map_err(|e| Error::parse(context, e))
    }

    pub fn with_config_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.with_overrides(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_repetitions == 0 || self.test_repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no method selected".into()));
        }
        if !(0.0..=1.0).contains(&self.failure_budget) {
            return Err(Error::Config("failure_budget must lie in [0, 1]".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.monitor.voltage.validate()?;
        self.monitor.loading.validate()
    }

    /// Digest of every setting that can change a result.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.jobs = None;
        digest_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

/// Seeds of the independent random parts of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub train_scenarios: u64,
    pub test_scenarios: u64,
    pub train_noise: u64,
    pub test_noise: u64,
    pub model: u64,
}

impl RunSeeds {
    pub fn from_master(seed: u64) -> Self {
        RunSeeds {
            train_scenarios: seeds::derive(seed, Stream::Scenario, &[0]),
            test_scenarios: seeds::derive(seed, Stream::Scenario, &[1]),
            train_noise: seeds::derive(seed, Stream::Measurement, &[0]),
            test_noise: seeds::derive(seed, Stream::Measurement, &[1]),
            model: seeds::derive(seed, Stream::Init, &[]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Writes a CSV file whose first line records the config hash and seed.
pub fn write_csv(path: &Path, provenance: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = format!("# {provenance}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::parse(path.display().to_string(), e);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

/// Short directory name of a measurement specification.
pub fn spec_dir(spec_hash: &str) -> String {
    spec_hash.chars().take(16).collect()
}

/// A loaded grid and catalog with the run's configuration.
pub struct Run {
    pub cfg: RunConfig,
    pub grid: GridModel,
    pub catalog: Catalog,
    pub seeds: RunSeeds,
}

/// Training outcome for one measurement specification.
#[derive(Debug, Clone)]
pub struct TrainedSpec {
    pub spec_hash: String,
    pub cases: Vec<String>,
    pub monitor: AnnMonitor,
    pub history: MonitorHistory,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub hidden_layers: usize,
    pub multiplier: usize,
    pub hidden_neurons: usize,
    pub n_params: usize,
    pub sr_c1: f64,
    pub sr_c2: f64,
    pub epochs: usize,
    pub seconds: f64,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Result<Run> {
        cfg.validate()?;
        let grid = match &cfg.grid {
            Some(p) => crate::grid::load_grid(p)?,
            None => GridModel::from_toml(BUNDLED_GRID, "bundled grid")?,
        };
        let catalog = match &cfg.cases_file {
            Some(p) => Catalog::load(p, &grid)?,
            None => Catalog::from_toml(BUNDLED_CASES, "bundled catalog", &grid)?,
        };
        let seeds = RunSeeds::from_master(cfg.seed);
        Ok(Run {
            cfg,
            grid,
            catalog,
            seeds,
        })
    }

    pub fn provenance(&self) -> String {
        format!("config_hash={}, seed={}", self.cfg.hash(), self.cfg.seed)
    }

    /// Selected cases with the correction toggle applied.
    pub fn cases(&self) -> Result<Vec<TestCase>> {
        let ids = if self.cfg.cases.is_empty() {
            self.catalog.ids()
        } else {
            self.cfg.cases.clone()
        };
        Ok(self
            .catalog
            .select(&ids)?
            .into_iter()
            .map(|c| c.with_correction(self.cfg.v_correction))
            .collect())
    }

    pub fn scenarios(&self, split: Split) -> Result<Vec<Scenario>> {
        match split {
            Split::Train => generate_set(&self.cfg.axes, &self.grid, self.cfg.train_repetitions, self.seeds.train_scenarios),
            Split::Test => match &self.cfg.test_scenarios {
                Some(p) => import_scenarios(p, &self.grid),
                None => generate_set(&self.cfg.axes, &self.grid, self.cfg.test_repetitions, self.seeds.test_scenarios),
            },
        }
    }

    fn truth_path(&self, scenarios: &[Scenario], opts: &TruthOptions) -> PathBuf {
        let key = format!(
            "{}|{}|{:?}|{}",
            self.grid.hash(),
            crate::scenario::scenarios_hash(scenarios),
            self.grid.configs(),
            serde_json::to_string(opts).expect("options serialize")
        );
        self.cfg.out.join("truth").join(format!("{}.json", digest_hex(key.as_bytes())))
    }

    /// Power-flow truth for a scenario set, read from the on-disk cache when
    /// present.
    pub fn truth_for(&self, scenarios: &[Scenario], opts: &TruthOptions) -> Result<TruthSet> {
        let path = self.truth_path(scenarios, opts);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(t) = serde_json::from_str::<TruthSet>(&text) {
                log::info!("truth cache hit {}", path.display());
                return Ok(t);
            }
            log::warn!("ignoring unreadable truth cache {}", path.display());
        }
        let truth = build_truth(&self.grid, scenarios, &self.grid.configs(), opts)?;
        if truth.failure_rate() > self.cfg.failure_budget {
            return Err(Error::FailureBudget {
                failed: truth.failed,
                total: truth.failed + truth.len(),
            });
        }
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string(&truth).map_err(|e| Error::parse("truth cache", e))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(truth)
    }

    pub fn truth(&self, split: Split) -> Result<(Vec<Scenario>, TruthSet)> {
        let scenarios = self.scenarios(split)?;
        let truth = self.truth_for(&scenarios, &TruthOptions::default())?;
        Ok((scenarios, truth))
    }

    /// Writes both scenario sets and fills the truth cache.
    pub fn generate(&self) -> Result<()> {
        for split in [Split::Train, Split::Test] {
            let (scenarios, truth) = self.truth(split)?;
            let path = self.cfg.out.join(format!("scenarios_{}.csv", split.name()));
            export_scenarios(&path, &self.grid, &scenarios, &[self.provenance()])?;
            log::info!(
                "{}: {} scenarios, {} power flows, {} diverged",
                split.name(),
                scenarios.len(),
                truth.len(),
                truth.failed
            );
        }
        Ok(())
    }

    /// Trains one monitor per distinct measurement specification among the
    /// selected cases and stores it under `models/`.
    pub fn train(&self) -> Result<Vec<TrainedSpec>> {
        let (_, truth) = self.truth(Split::Train)?;
        let mut specs: BTreeMap<String, (MeasurementSpec, Vec<String>)> = BTreeMap::new();
        for tc in self.cases()? {
            specs.entry(tc.spec.hash()).or_insert_with(|| (tc.spec.clone(), Vec::new())).1.push(tc.id.clone());
        }
        let mut out = Vec::new();
        for (hash, (spec, cases)) in specs {
            let start = Instant::now();
            let (monitor, history) = train_for_spec(&self.grid, &truth, &spec, &self.cfg.monitor, &self.seeds)?;
            let seconds = start.elapsed().as_secs_f64();
            log::info!("trained {} ({}) in {seconds:.1} s", cases.join(","), spec_dir(&hash));
            let dir = self.cfg.out.join("models").join(spec_dir(&hash));
            monitor.save(&dir)?;
            let mut rows = Vec::new();
            for (name, h) in [("voltage", &history.voltage), ("loading", &history.loading)] {
                for e in &h.epochs {
                    rows.push(vec![name.to_string(), e.epoch.to_string(), format!("{:.9e}", e.train_loss), format!("{:.9e}", e.val_loss)]);
                }
            }
            write_csv(&dir.join("history.csv"), &self.provenance(), &["network", "epoch", "train_loss", "val_loss"], &rows)?;
            out.push(TrainedSpec {
                spec_hash: hash,
                cases,
                monitor,
                history,
                seconds,
            });
        }
        Ok(out)
    }

    fn load_monitors(&self, cases: &[TestCase]) -> Result<HashMap<String, AnnMonitor>> {
        let mut monitors = HashMap::new();
        if !self.cfg.methods.contains(&Method::Ann) {
            return Ok(monitors);
        }
        for tc in cases {
            let hash = tc.spec.hash();
            if monitors.contains_key(&hash) {
                continue;
            }
            let dir = self.cfg.out.join("models").join(spec_dir(&hash));
            if !dir.join("voltage.json").exists() {
                return Err(Error::MissingModel(format!("{} (expected in {})", tc.id, dir.display())));
            }
            monitors.insert(hash.clone(), AnnMonitor::load(&dir, &hash)?);
        }
        Ok(monitors)
    }

    /// Runs the selected cases against the trained models and writes the
    /// per-scenario, error-statistic and summary CSVs.
    pub fn evaluate(&self) -> Result<Vec<EvalResult>> {
        let cases = self.cases()?;
        let monitors = self.load_monitors(&cases)?;
        let (scenarios, truth) = self.truth(Split::Test)?;
        let ctx = EvalContext {
            grid: &self.grid,
            scenarios: &scenarios,
            truth: &truth,
            seed: self.seeds.test_noise,
            wls: self.cfg.wls.clone(),
            correction: self.cfg.correction,
            monitors,
        };
        let mut all = Vec::new();
        let mut summary = Vec::new();
        for tc in &cases {
            let results = run_test_case(&ctx, tc, &self.cfg.methods)?;
            self.write_case(tc, &results)?;
            for r in &results {
                log::info!("{} {}: SR(C1) {:.2} %, SR(C2) {:.2} %", r.case, r.method, 100.0 * r.sr_c1, 100.0 * r.sr_c2);
                summary.push(vec![
                    r.case.clone(),
                    tc.group.clone(),
                    r.method.to_string(),
                    r.n().to_string(),
                    f(r.sr_c1),
                    f(r.sr_c2),
                    f(r.voltage_sr_c1),
                    f(r.voltage_sr_c2),
                    r.n_failed.to_string(),
                ]);
            }
            all.extend(results);
        }
        write_csv(
            &self.cfg.out.join("summary.csv"),
            &self.provenance(),
            &["case", "group", "method", "n", "sr_c1", "sr_c2", "voltage_sr_c1", "voltage_sr_c2", "n_failed"],
            &summary,
        )?;
        Ok(all)
    }

    fn write_case(&self, tc: &TestCase, results: &[EvalResult]) -> Result<()> {
        let label = tc.label();
        let mut rows = Vec::new();
        for r in results {
            for o in &r.outcomes {
                rows.push(vec![
                    r.method.to_string(),
                    o.scenario.to_string(),
                    o.config.to_string(),
                    f(o.errors.max_v_err_pct),
                    f(o.errors.max_loading_err_pct),
                    u8::from(o.ok_c1).to_string(),
                    u8::from(o.ok_c2).to_string(),
                    u8::from(o.failed).to_string(),
                    o.voltage_corrections.to_string(),
                ]);
            }
        }
        write_csv(
            &self.cfg.out.join("results").join(format!("{label}.csv")),
            &self.provenance(),
            &["method", "scenario", "config", "max_v_err_pct", "max_loading_err_pct", "ok_c1", "ok_c2", "failed", "voltage_corrections"],
            &rows,
        )?;
        let (buses, lines) = error_stats(&self.grid, results);
        let table = |rows: &[ErrorRow]| -> Vec<Vec<String>> {
            let cells = |s: Option<crate::evaluation::ErrorStat>| match s {
                Some(s) => vec![f(s.mean), f(s.sd), f(s.max)],
                None => vec![String::new(); 3],
            };
            rows.iter()
                .map(|r| {
                    let mut row = vec![r.element.clone()];
                    row.extend(cells(r.ann));
                    row.extend(cells(r.wls));
                    row
                })
                .collect()
        };
        let header = ["element", "ann_mean", "ann_sd", "ann_max", "wls_mean", "wls_sd", "wls_max"];
        let dir = self.cfg.out.join("errors");
        write_csv(&dir.join(format!("{label}_bus.csv")), &self.provenance(), &header, &table(&buses))?;
        write_csv(&dir.join(format!("{label}_line.csv")), &self.provenance(), &header, &table(&lines))
    }

    /// Trains and scores one monitor per (hidden layers, size multiplier) on
    /// the first selected case. Timings go to a separate text file so the CSV
    /// stays reproducible.
    pub fn tune(&self, hidden_layers: &[usize], multipliers: &[usize]) -> Result<Vec<TuneRow>> {
        let tc = self
            .cases()?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Config("no case selected".into()))?;
        let (_, train_truth) = self.truth(Split::Train)?;
        let (scenarios, test_truth) = self.truth(Split::Test)?;
        let mut rows = Vec::new();
        for &layers in hidden_layers {
            for &mult in multipliers {
                let cfg = MonitorConfig {
                    n_hidden_layers: layers,
                    layer_size_multiplier: mult,
                    ..self.cfg.monitor.clone()
                };
                let start = Instant::now();
                let (monitor, history) = train_for_spec(&self.grid, &train_truth, &tc.spec, &cfg, &self.seeds)?;
                let seconds = start.elapsed().as_secs_f64();
                let ctx = EvalContext {
                    grid: &self.grid,
                    scenarios: &scenarios,
                    truth: &test_truth,
                    seed: self.seeds.test_noise,
                    wls: self.cfg.wls.clone(),
                    correction: self.cfg.correction,
                    monitors: HashMap::from([(tc.spec.hash(), monitor.clone())]),
                };
                let r = run_test_case(&ctx, &tc, &[Method::Ann])?.remove(0);
                let arch = &monitor.voltage.arch;
                rows.push(TuneRow {
                    hidden_layers: layers,
                    multiplier: mult,
                    hidden_neurons: arch.hidden_neurons()?,
                    n_params: arch.n_params()? + monitor.loading.arch.n_params()?,
                    sr_c1: r.sr_c1,
                    sr_c2: r.sr_c2,
                    epochs: history.voltage.epochs.len().max(history.loading.epochs.len()),
                    seconds,
                });
                log::info!("tune {layers}x{mult}: SR(C1) {:.2} % in {seconds:.1} s", 100.0 * r.sr_c1);
            }
        }
        let csv_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.hidden_layers.to_string(),
                    r.multiplier.to_string(),
                    r.hidden_neurons.to_string(),
                    r.n_params.to_string(),
                    f(r.sr_c1),
                    f(r.sr_c2),
                    r.epochs.to_string(),
                ]
            })
            .collect();
        write_csv(
            &self.cfg.out.join("tune.csv"),
            &self.provenance(),
            &["hidden_layers", "multiplier", "hidden_neurons", "n_params", "sr_c1", "sr_c2", "epochs"],
            &csv_rows,
        )?;
        let mut times = String::new();
        for r in &rows {
            let _ = writeln!(times, "{}x{} {:.3} s", r.hidden_layers, r.multiplier, r.seconds);
        }
        let path = self.cfg.out.join("tune_times.txt");
        std::fs::write(&path, times).map_err(|e| Error::io(&path, e))?;
        Ok(rows)
    }
}

/// Builds the noisy training set for `spec` and trains a monitor on it.
pub fn train_for_spec(
    grid: &GridModel,
    truth: &TruthSet,
    spec: &MeasurementSpec,
    cfg: &MonitorConfig,
    seeds: &RunSeeds,
) -> Result<(AnnMonitor, MonitorHistory)> {
    let data = build_training_set(grid, truth, spec, seeds.train_noise)?;
    train_monitor(&data, &cfg.clone().seeded(seeds.model))
}

/// Load, WEC and PV levels of the five extreme operating points used by
/// earlier ANN monitors for training.
pub const EXTREME_TUPLES: [[f64; 3]; 5] = [
    [1.0, 0.0, 0.0],
    [0.1, 1.0, 0.9],
    [0.1, 0.0, 0.0],
    [1.0, 1.0, 0.9],
    [0.55, 0.5, 0.45],
];

/// The extreme operating points without unit noise, for load/WEC/PV axes.
pub fn extreme_scenarios(grid: &GridModel) -> Result<Vec<Scenario>> {
    let axes: Vec<ScenarioAxis> = default_axes()
        .into_iter()
        .map(|a| ScenarioAxis { noise_sd_pct: 0.0, ..a })
        .collect();
    EXTREME_TUPLES
        .iter()
        .map(|t| expand(&axes, &ScenarioTuple { values: t.to_vec() }, grid, 0))
        .collect()
}

/// One hidden layer of two sigmoid neurons trained with Levenberg-Marquardt.
pub fn small_sigmoid_config() -> MonitorConfig {
    let mut cfg = MonitorConfig {
        n_hidden_layers: 1,
        hidden_width: Some(2),
        hidden_activation: Activation::Sigmoid,
        ..MonitorConfig::default()
    };
    for t in [&mut cfg.voltage, &mut cfg.loading] {
        t.optimizer = Optimizer::LevenbergMarquardt;
        t.max_epochs = 1000;
        t.patience = 6;
    }
    cfg
}

#[derive(Debug, Clone)]
pub struct SotaReport {
    /// Proposed architecture trained on the five extreme points only.
    pub extreme_training: EvalResult,
    /// Two-neuron sigmoid network trained on the full training set.
    pub small_network: EvalResult,
}

/// Evaluates both earlier ANN approaches on `tc` over the test truth.
pub fn compare_sota(
    grid: &GridModel,
    tc: &TestCase,
    train_truth: &TruthSet,
    test: (&[Scenario], &TruthSet),
    monitor_cfg: &MonitorConfig,
    seeds: &RunSeeds,
) -> Result<SotaReport> {
    let extreme = extreme_scenarios(grid)?;
    let extreme_truth = build_truth(grid, &extreme, &grid.configs(), &TruthOptions::default())?;
    let evaluate = |monitor: AnnMonitor| -> Result<EvalResult> {
        let ctx = EvalContext {
            grid,
            scenarios: test.0,
            truth: test.1,
            seed: seeds.test_noise,
            wls: WlsConfig::default(),
            correction: CorrectionConfig::default(),
            monitors: HashMap::from([(tc.spec.hash(), monitor)]),
        };
        Ok(run_test_case(&ctx, tc, &[Method::Ann])?.remove(0))
    };
    let (m, _) = train_for_spec(grid, &extreme_truth, &tc.spec, monitor_cfg, seeds)?;
    let extreme_training = evaluate(m)?;
    let (m, _) = train_for_spec(grid, train_truth, &tc.spec, &small_sigmoid_config(), seeds)?;
    let small_network = evaluate(m)?;
    Ok(SotaReport {
        extreme_training,
        small_network,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_only_given_keys() {
        let cfg = RunConfig {
            seed: 9,
            cases: vec!["M4".into()],
            ..Default::default()
        };
        let cfg = cfg
            .with_overrides("train_repetitions = 1\n[monitor.voltage]\nmax_epochs = 7\n", "test")
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train_repetitions, 1);
        assert_eq!(cfg.monitor.voltage.max_epochs, 7);
        assert_eq!(cfg.monitor.loading.max_epochs, 150);
        assert_eq!(cfg.cases, vec!["M4".to_string()]);
        assert!(RunConfig::default().with_overrides("seed = \"x\"", "test").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: "elsewhere".into(),
            jobs: Some(3),
            ..Default::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 2, ..Default::default() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn bundled_catalog_loads() {
        let run = Run::new(RunConfig::default()).unwrap();
        assert_eq!(run.catalog.cases.len(), 39);
        assert_eq!(run.cases().unwrap().len(), 39);
        let m4 = run.catalog.get("M4").unwrap();
        assert_eq!(m4.spec.len(), 12);
        assert_eq!(run.catalog.get("F1").unwrap().spec, m4.spec);
        let sel = RunConfig {
            cases: vec!["Q9".into()],
            ..Default::default()
        };
        assert!(Run::new(sel).unwrap().cases().is_err());
    }

    #[test]
    fn extreme_points_are_noise_free() {
        let grid = GridModel::from_toml(BUNDLED_GRID, "grid").unwrap();
        let s = extreme_scenarios(&grid).unwrap();
        assert_eq!(s.len(), 5);
        let again = extreme_scenarios(&grid).unwrap();
        assert_eq!(s, again);
    }
}
