//! Success criteria, test-case execution and error statistics.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::TestCase;
use crate::correction::{correct_voltages, CorrectionConfig};
use crate::dataset::{build_truth, measure, targets, TruthOptions, TruthSet};
use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::measurement::{inject_fault, FaultKind, MeasurementSet, MeasurementSpec};
use crate::monitor::AnnMonitor;
use crate::scenario::Scenario;
use crate::seeds;
use crate::wls::{run_wls, WlsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: &'static str,
    /// Largest voltage magnitude error in percent of nominal.
    pub v_err_limit_pct: f64,
    /// Largest line loading error in percentage points.
    pub loading_err_limit_pct: f64,
}

pub const C1: Criterion = Criterion {
    name: "C1",
    v_err_limit_pct: 1.0,
    loading_err_limit_pct: 10.0,
};

pub const C2: Criterion = Criterion {
    name: "C2",
    v_err_limit_pct: 0.5,
    loading_err_limit_pct: 5.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioErrors {
    pub max_v_err_pct: f64,
    pub max_loading_err_pct: f64,
}

impl ScenarioErrors {
    /// Errors of an estimator that produced no usable estimate.
    pub const FAILED: ScenarioErrors = ScenarioErrors {
        max_v_err_pct: f64::INFINITY,
        max_loading_err_pct: f64::INFINITY,
    };

    pub fn meets(&self, c: &Criterion) -> bool {
        self.max_v_err_pct < c.v_err_limit_pct && self.max_loading_err_pct < c.loading_err_limit_pct
    }

    pub fn meets_voltage(&self, c: &Criterion) -> bool {
        self.max_v_err_pct < c.v_err_limit_pct
    }
}

fn abs_errors(est: &[f64], truth: &[f64]) -> Vec<f64> {
    est.iter()
        .zip(truth)
        .map(|(e, t)| {
            let d = (e - t).abs() * 100.0;
            if d.is_nan() {
                f64::INFINITY
            } else {
                d
            }
        })
        .collect()
}

pub fn scenario_errors(v_est: &[f64], v_true: &[f64], l_est: &[f64], l_true: &[f64]) -> ScenarioErrors {
    let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    ScenarioErrors {
        max_v_err_pct: max(abs_errors(v_est, v_true)),
        max_loading_err_pct: max(abs_errors(l_est, l_true)),
    }
}

/// Voltages in pu, loadings as fractions of rating; strict limits.
pub fn is_successful(v_est: &[f64], v_true: &[f64], l_est: &[f64], l_true: &[f64], c: &Criterion) -> bool {
    scenario_errors(v_est, v_true, l_est, l_true).meets(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ann,
    Wls,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ann => "ann",
            Method::Wls => "wls",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ann" => Ok(Method::Ann),
            "wls" => Ok(Method::Wls),
            other => Err(Error::Config(format!("unknown method {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: usize,
    pub config: usize,
    pub errors: ScenarioErrors,
    pub ok_c1: bool,
    pub ok_c2: bool,
    /// The estimator failed to produce an estimate (error or non-convergence).
    pub failed: bool,
    pub voltage_corrections: usize,
}

/// Mean, SD and maximum of absolute errors for one bus or line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStat {
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub case: String,
    pub method: Method,
    pub outcomes: Vec<ScenarioOutcome>,
    pub sr_c1: f64,
    pub sr_c2: f64,
    /// Share of scenarios meeting only the voltage limits of C1 / C2.
    pub voltage_sr_c1: f64,
    pub voltage_sr_c2: f64,
    pub n_failed: usize,
    /// Per-bus voltage errors (% of nominal), over scenarios with an estimate.
    pub bus_stats: Vec<ErrorStat>,
    /// Per-monitored-line loading errors (percentage points).
    pub line_stats: Vec<ErrorStat>,
}

impl EvalResult {
    pub fn n(&self) -> usize {
        self.outcomes.len()
    }
}

struct Accumulator {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    max: Vec<f64>,
    n: usize,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator {
            sum: vec![0.0; len],
            sumsq: vec![0.0; len],
            max: vec![0.0; len],
            n: 0,
        }
    }

    fn add(&mut self, errs: &[f64]) {
        for (i, &e) in errs.iter().enumerate() {
            self.sum[i] += e;
            self.sumsq[i] += e * e;
            self.max[i] = self.max[i].max(e);
        }
        self.n += 1;
    }

    fn finish(self) -> Vec<ErrorStat> {
        let n = self.n.max(1) as f64;
        (0..self.sum.len())
            .map(|i| {
                let mean = self.sum[i] / n;
                ErrorStat {
                    mean,
                    sd: (self.sumsq[i] / n - mean * mean).max(0.0).sqrt(),
                    max: self.max[i],
                }
            })
            .collect()
    }
}

/// Inputs shared by all test cases of one evaluation run.
pub struct EvalContext<'a> {
    pub grid: &'a GridModel,
    pub scenarios: &'a [Scenario],
    /// Noise-free truth of `scenarios` on the nominal grid.
    pub truth: &'a TruthSet,
    /// Seed for measurement noise and random topology errors.
    pub seed: u64,
    pub wls: WlsConfig,
    pub correction: CorrectionConfig,
    /// Trained monitors by measurement-spec hash.
    pub monitors: HashMap<String, AnnMonitor>,
}

/// Measurement set for one truth record after faults, reported topology
/// errors and optional voltage correction; the number of corrected voltages.
pub fn case_measurements(
    tc: &TestCase,
    truth: &TruthSet,
    record: &crate::dataset::TruthRecord,
    seed: u64,
    correction: &CorrectionConfig,
) -> Result<(MeasurementSet, usize)> {
    let spec = &tc.spec;
    let scaling = tc.bus_scaling();
    let mut ms = measure(truth, record, spec, &scaling, seed);
    let true_values = record.state.true_values(spec);
    for f in tc.faults.iter().filter(|f| !matches!(f.kind, FaultKind::PowerDeviation { .. })) {
        ms = inject_fault(&ms, spec, f, &true_values)?;
    }
    for &s in &tc.flip_switches {
        ms.switch_states[s] = !ms.switch_states[s];
    }
    let mut corrections = 0;
    if tc.correction {
        let report = correct_voltages(&ms, spec, correction);
        corrections = report.n_replaced();
        ms = report.corrected;
    }
    Ok((ms, corrections))
}

fn truth_for<'a>(ctx: &'a EvalContext<'_>, tc: &TestCase) -> Result<std::borrow::Cow<'a, TruthSet>> {
    if !tc.changes_truth() {
        return Ok(std::borrow::Cow::Borrowed(ctx.truth));
    }
    let opts = TruthOptions {
        impedance: tc.impedance.clone(),
        bus_scaling: tc.bus_scaling(),
        seed: seeds::derive(ctx.seed, seeds::Stream::Topology, &[]),
    };
    Ok(std::borrow::Cow::Owned(build_truth(ctx.grid, ctx.scenarios, &ctx.truth.configs, &opts)?))
}

/// Runs one test case for each requested method on identical measurement
/// vectors.
pub fn run_test_case(ctx: &EvalContext<'_>, tc: &TestCase, methods: &[Method]) -> Result<Vec<EvalResult>> {
    tc.spec.validate(ctx.grid)?;
    let hash = tc.spec.hash();
    let monitor = if methods.contains(&Method::Ann) {
        Some(ctx.monitors.get(&hash).ok_or_else(|| Error::MissingModel(format!("{} (spec {hash})", tc.id)))?)
    } else {
        None
    };
    let truth = truth_for(ctx, tc)?;
    let n_bus = ctx.grid.n_bus();
    let n_line = ctx.grid.monitored_lines().len();

    type Row = Vec<(ScenarioOutcome, Option<(Vec<f64>, Vec<f64>)>)>;
    let rows: Vec<Result<Row>> = truth
        .records
        .par_iter()
        .map(|rec| {
            let (ms, corrections) = case_measurements(tc, &truth, rec, ctx.seed, &ctx.correction)?;
            let (v_true, l_true) = targets(ctx.grid, &rec.state);
            let mut out = Vec::with_capacity(methods.len());
            for m in methods {
                let estimate = match m {
                    Method::Ann => {
                        let e = monitor.unwrap().estimate(&ms)?;
                        Some((e.v_pu, e.loading))
                    }
                    // A reported topology may be unusable (e.g. islanding a
                    // loaded bus); that counts as a failed estimate.
                    Method::Wls => match run_wls(ctx.grid, &tc.spec, &ms, &ctx.wls) {
                        Ok(e) if e.converged => Some((e.v_mag_pu, e.loading)),
                        Ok(_) => None,
                        Err(e) => {
                            log::debug!("{} scenario {}: {e}", tc.id, rec.scenario);
                            None
                        }
                    },
                };
                let (errors, detail) = match &estimate {
                    Some((v, l)) => {
                        let ve = abs_errors(v, &v_true);
                        let le = abs_errors(l, &l_true);
                        let errors = ScenarioErrors {
                            max_v_err_pct: ve.iter().copied().fold(0.0, f64::max),
                            max_loading_err_pct: le.iter().copied().fold(0.0, f64::max),
                        };
                        (errors, Some((ve, le)))
                    }
                    None => (ScenarioErrors::FAILED, None),
                };
                out.push((
                    ScenarioOutcome {
                        scenario: rec.scenario,
                        config: rec.config,
                        ok_c1: errors.meets(&C1),
                        ok_c2: errors.meets(&C2),
                        errors,
                        failed: estimate.is_none(),
                        voltage_corrections: corrections,
                    },
                    detail,
                ));
            }
            Ok(out)
        })
        .collect();

    let mut per_method: Vec<(Vec<ScenarioOutcome>, Accumulator, Accumulator)> = methods
        .iter()
        .map(|_| (Vec::new(), Accumulator::new(n_bus), Accumulator::new(n_line)))
        .collect();
    for row in rows {
        for (k, (outcome, detail)) in row?.into_iter().enumerate() {
            let (outcomes, bus, line) = &mut per_method[k];
            outcomes.push(outcome);
            if let Some((ve, le)) = detail {
                bus.add(&ve);
                line.add(&le);
            }
        }
    }
    Ok(methods
        .iter()
        .zip(per_method)
        .map(|(&method, (outcomes, bus, line))| {
            let n = outcomes.len().max(1) as f64;
            let share = |f: &dyn Fn(&ScenarioOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
            EvalResult {
                case: tc.label(),
                method,
                sr_c1: share(&|o| o.ok_c1),
                sr_c2: share(&|o| o.ok_c2),
                voltage_sr_c1: share(&|o| o.errors.meets_voltage(&C1)),
                voltage_sr_c2: share(&|o| o.errors.meets_voltage(&C2)),
                n_failed: outcomes.iter().filter(|o| o.failed).count(),
                bus_stats: bus.finish(),
                line_stats: line.finish(),
                outcomes,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    /// `bus<i>` or `line<id>`.
    pub element: String,
    pub ann: Option<ErrorStat>,
    pub wls: Option<ErrorStat>,
}

/// Per-element error table of one case, sorted by ascending maximum WLS
/// error (ANN maximum when WLS is absent). Voltage rows precede line rows.
pub fn error_stats(grid: &GridModel, results: &[EvalResult]) -> (Vec<ErrorRow>, Vec<ErrorRow>) {
    let find = |m: Method| results.iter().find(|r| r.method == m);
    let (ann, wls) = (find(Method::Ann), find(Method::Wls));
    let table = |names: Vec<String>, pick: &dyn Fn(&EvalResult) -> &Vec<ErrorStat>| {
        let mut rows: Vec<ErrorRow> = names
            .into_iter()
            .enumerate()
            .map(|(i, element)| ErrorRow {
                element,
                ann: ann.map(|r| pick(r)[i]),
                wls: wls.map(|r| pick(r)[i]),
            })
            .collect();
        let key = |r: &ErrorRow| r.wls.or(r.ann).map_or(0.0, |s| s.max);
        rows.sort_by(|a, b| key(a).total_cmp(&key(b)));
        rows
    };
    let buses = table((0..grid.n_bus()).map(|b| format!("bus{b}")).collect(), &|r| &r.bus_stats);
    let lines = table(grid.monitored_lines().iter().map(|l| format!("line{l}")).collect(), &|r| &r.line_stats);
    (buses, lines)
}

/// A group of measurements added together during placement search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    /// V, P and Q at a bus.
    Bus(usize),
    /// P and Q flow of a line, measured at the given bus.
    Line { line: usize, at: usize },
}

impl Placement {
    pub fn apply(&self, grid: &GridModel, spec: MeasurementSpec) -> MeasurementSpec {
        match *self {
            Placement::Bus(b) => spec.voltage(b).bus_power(b),
            Placement::Line { line, at } => {
                let end = if grid.lines[line].from_bus == at {
                    crate::measurement::LineEnd::From
                } else {
                    crate::measurement::LineEnd::To
                };
                spec.line_power(line, end)
            }
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Bus(b) => write!(f, "bus{b}"),
            Placement::Line { line, at } => write!(f, "line{line}@{at}"),
        }
    }
}

/// Candidate order: every bus in index order, then the given lines.
pub fn default_pool(grid: &GridModel, lines: &[(usize, usize)]) -> Vec<Placement> {
    let mut pool: Vec<Placement> = (0..grid.n_bus()).map(Placement::Bus).collect();
    pool.extend(
        lines
            .iter()
            .filter_map(|&(a, b)| grid.line_between(a, b).map(|line| Placement::Line { line, at: a })),
    );
    pool
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub added: Option<Placement>,
    pub n_measurements: usize,
    pub sr_c1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trajectory: Vec<SearchStep>,
    pub spec: MeasurementSpec,
    pub reached: bool,
}

/// Adds pool entries one at a time, in order, until `evaluate` reports an
/// SR(C1) of at least `target`.
pub fn search_measurement_config(
    grid: &GridModel,
    base: MeasurementSpec,
    pool: &[Placement],
    target: f64,
    mut evaluate: impl FnMut(&MeasurementSpec) -> Result<f64>,
) -> Result<SearchResult> {
    let mut spec = base;
    let mut trajectory = Vec::new();
    let mut sr = if spec.is_empty() { 0.0 } else { evaluate(&spec)? };
    trajectory.push(SearchStep {
        added: None,
        n_measurements: spec.len(),
        sr_c1: sr,
    });
    let mut rest = pool.iter();
    while sr < target {
        let Some(p) = rest.next() else {
            return Ok(SearchResult {
                trajectory,
                spec,
                reached: false,
            });
        };
        spec = p.apply(grid, spec);
        sr = evaluate(&spec)?;
        trajectory.push(SearchStep {
            added: Some(*p),
            n_measurements: spec.len(),
            sr_c1: sr,
        });
    }
    Ok(SearchResult {
        trajectory,
        spec,
        reached: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_boundaries() {
        let t = [1.0, 1.0];
        let l = [0.5, 0.5];
        assert!(is_successful(&t, &t, &l, &l, &C1));
        assert!(is_successful(&t, &t, &l, &l, &C2));
        let v = [1.007, 1.0];
        let le = [0.53, 0.5];
        assert!(is_successful(&v, &t, &le, &l, &C1));
        assert!(!is_successful(&v, &t, &le, &l, &C2));
        let e = scenario_errors(&[1.0, 1.0], &[0.99, 1.0], &l, &l);
        assert!((e.max_v_err_pct - 1.0).abs() < 1e-9);
        let at_limit = ScenarioErrors {
            max_v_err_pct: 1.0,
            max_loading_err_pct: 0.0,
        };
        assert!(!at_limit.meets(&C1));
        assert!(!ScenarioErrors::FAILED.meets(&C1));
        assert!(!is_successful(&[f64::NAN], &[1.0], &[], &[], &C1));
    }

    #[test]
    fn search_stops_at_target() {
        let g = crate::grid::load_grid(concat!(env!("CARGO_MANIFEST_DIR"), "/data/cigre_mv_modified.toml")).unwrap();
        let pool = default_pool(&g, &[(1, 2)]);
        assert_eq!(pool.len(), 16);
        let base = MeasurementSpec::new().voltage(0);
        let r = search_measurement_config(&g, base.clone(), &pool, 0.0, |_| Ok(0.3)).unwrap();
        assert_eq!(r.trajectory.len(), 1);
        assert!(r.reached);
        let r = search_measurement_config(&g, base.clone(), &pool[..1], 1.0, |_| Ok(0.3)).unwrap();
        assert_eq!(r.trajectory.len(), 2);
        assert!(!r.reached);
        let r = search_measurement_config(&g, base, &pool, 0.9, |s| Ok(s.len() as f64 / 20.0)).unwrap();
        assert!(r.reached);
        assert_eq!(r.spec.len(), 1 + 3 * 6);
    }
}
