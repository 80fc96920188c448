//! Measurement specifications, noisy measurement simulation and fault
//! injection.
//!
//! A [`MeasurementSpec`] is an ordered list of entries; its order defines the
//! estimator input layout and is guarded by a digest of kinds and locations.
//! Values are in engineering units: voltages in pu, powers in kW / kvar
//! (bus injections generation-positive, line flows positive when leaving the
//! measuring end into the line), currents in amperes.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, GridModel, GridView};
use crate::hash::digest_hex;
use crate::powerflow::{bus_injections, derive_line_quantities, solve_pf, InjectionSet, LineFlow, PfSolution};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasKind {
    VBus,
    PBus,
    QBus,
    PLine,
    QLine,
    ILine,
}

impl MeasKind {
    pub fn name(self) -> &'static str {
        match self {
            MeasKind::VBus => "v_bus",
            MeasKind::PBus => "p_bus",
            MeasKind::QBus => "q_bus",
            MeasKind::PLine => "p_line",
            MeasKind::QLine => "q_line",
            MeasKind::ILine => "i_line",
        }
    }

    pub fn is_bus(self) -> bool {
        matches!(self, MeasKind::VBus | MeasKind::PBus | MeasKind::QBus)
    }

    /// Default relative standard deviation in percent (voltage ACC 0.5,
    /// current ACC 1, power as the sum of both).
    pub fn default_sd_pct(self) -> f64 {
        match self {
            MeasKind::VBus => 0.5 / 3.0,
            MeasKind::ILine => 0.5,
            _ => 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineEnd {
    #[default]
    From,
    To,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Bus(usize),
    Line { line: usize, end: LineEnd },
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Bus(b) => write!(f, "bus{b}"),
            Location::Line { line, end } => write!(f, "line{line}:{end:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub kind: MeasKind,
    pub location: Location,
    pub sd_pct: f64,
}

impl MeasurementEntry {
    pub fn bus(&self) -> Option<usize> {
        match self.location {
            Location::Bus(b) => Some(b),
            Location::Line { .. } => None,
        }
    }

    pub fn line(&self) -> Option<(usize, LineEnd)> {
        match self.location {
            Location::Line { line, end } => Some((line, end)),
            Location::Bus(_) => None,
        }
    }
}

/// Instrument accuracy description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Accuracy {
    /// Voltage transformer class (maximum error in percent).
    VoltageClass(f64),
    /// Current transformer class; the maximum error is 1.5 times the class.
    CurrentClass(f64),
    /// Power measurement combining voltage and current accuracy.
    Power,
    /// Explicit maximum error in percent, interpreted as a 3-sigma bound.
    MaxErrorPct(f64),
}

const VOLTAGE_CLASSES: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 3.0];
const CURRENT_CLASSES: [f64; 4] = [0.1, 0.2, 0.5, 1.0];

/// Maps an accuracy class to a Gaussian SD in percent via a 3-sigma interval.
pub fn accuracy_to_sd(acc: Accuracy) -> Result<f64> {
    let known = |classes: &[f64], c: f64| classes.iter().any(|&k| (k - c).abs() < 1e-12);
    match acc {
        Accuracy::VoltageClass(c) if known(&VOLTAGE_CLASSES, c) => Ok(c / 3.0),
        Accuracy::CurrentClass(c) if known(&CURRENT_CLASSES, c) => Ok(1.5 * c / 3.0),
        Accuracy::Power => Ok(2.0 / 3.0),
        Accuracy::MaxErrorPct(e) if e > 0.0 && e.is_finite() => Ok(e / 3.0),
        other => Err(Error::UnknownAccuracyClass(format!("{other:?}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub entries: Vec<MeasurementEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    format: u32,
    #[serde(default)]
    entries: Vec<SpecFileEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFileEntry {
    kind: MeasKind,
    bus: Option<usize>,
    line: Option<usize>,
    end: Option<LineEnd>,
    sd_pct: Option<f64>,
}

impl MeasurementSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, kind: MeasKind, location: Location) -> &mut Self {
        self.entries.push(MeasurementEntry {
            kind,
            location,
            sd_pct: kind.default_sd_pct(),
        });
        self
    }

    pub fn voltage(mut self, bus: usize) -> Self {
        self.push(MeasKind::VBus, Location::Bus(bus));
        self
    }

    /// P and Q injection at a bus.
    pub fn bus_power(mut self, bus: usize) -> Self {
        self.push(MeasKind::PBus, Location::Bus(bus));
        self.push(MeasKind::QBus, Location::Bus(bus));
        self
    }

    /// P and Q flow at one end of a line.
    pub fn line_power(mut self, line: usize, end: LineEnd) -> Self {
        let loc = Location::Line { line, end };
        self.push(MeasKind::PLine, loc);
        self.push(MeasKind::QLine, loc);
        self
    }

    pub fn line_current(mut self, line: usize, end: LineEnd) -> Self {
        self.push(MeasKind::ILine, Location::Line { line, end });
        self
    }

    pub fn contains(&self, kind: MeasKind, location: Location) -> bool {
        self.entries.iter().any(|e| e.kind == kind && e.location == location)
    }

    pub fn voltage_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == MeasKind::VBus)
            .map(|(i, _)| i)
            .collect()
    }

    /// Digest of entry kinds and locations (not accuracies).
    pub fn hash(&self) -> String {
        let text: String = self
            .entries
            .iter()
            .map(|e| format!("{}@{}\n", e.kind.name(), e.location))
            .collect();
        digest_hex(text.as_bytes())
    }

    pub fn validate(&self, grid: &GridModel) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            let ok = match e.location {
                Location::Bus(b) => e.kind.is_bus() && b < grid.n_bus(),
                Location::Line { line, .. } => !e.kind.is_bus() && line < grid.lines.len(),
            };
            if !ok {
                return Err(Error::InvalidSpec(format!(
                    "entry {i}: {} at {} does not exist in the grid",
                    e.kind.name(),
                    e.location
                )));
            }
            if !(e.sd_pct >= 0.0 && e.sd_pct.is_finite()) {
                return Err(Error::InvalidSpec(format!("entry {i}: sd_pct must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        if file.format != 1 {
            return Err(Error::parse(context, format!("unsupported format {}", file.format)));
        }
        let entries = file
            .entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                let location = match (e.kind.is_bus(), e.bus, e.line) {
                    (true, Some(b), None) => Location::Bus(b),
                    (false, None, Some(l)) => Location::Line {
                        line: l,
                        end: e.end.unwrap_or_default(),
                    },
                    _ => {
                        return Err(Error::parse(
                            context,
                            format!("entry {i}: {} needs exactly one of bus/line", e.kind.name()),
                        ))
                    }
                };
                Ok(MeasurementEntry {
                    kind: e.kind,
                    location,
                    sd_pct: e.sd_pct.unwrap_or(e.kind.default_sd_pct()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MeasurementSpec { entries })
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::from("format = 1\n");
        for e in &self.entries {
            out.push_str("\n[[entries]]\n");
            out.push_str(&format!("kind = \"{}\"\n", e.kind.name()));
            match e.location {
                Location::Bus(b) => out.push_str(&format!("bus = {b}\n")),
                Location::Line { line, end } => {
                    let end = if end == LineEnd::From { "from" } else { "to" };
                    out.push_str(&format!("line = {line}\nend = \"{end}\"\n"));
                }
            }
            out.push_str(&format!("sd_pct = {}\n", e.sd_pct));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }
}

/// Noise-free operating point: PF solution plus derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub solution: PfSolution,
    pub flows: Vec<LineFlow>,
    pub bus_p_kw: Vec<f64>,
    pub bus_q_kvar: Vec<f64>,
}

impl SystemState {
    pub fn solve(view: &GridView<'_>, injections: &InjectionSet) -> Result<Self> {
        let solution = solve_pf(view, injections)?;
        Ok(Self::from_solution(view, solution))
    }

    pub fn from_solution(view: &GridView<'_>, solution: PfSolution) -> Self {
        let grid = view.grid();
        let y = build_admittance(view);
        let s: Vec<Complex64> = bus_injections(&y, &solution.voltages());
        let kva = grid.s_base_mva * 1e3;
        let flows = derive_line_quantities(&solution, view);
        SystemState {
            bus_p_kw: s.iter().map(|c| c.re * kva).collect(),
            bus_q_kvar: s.iter().map(|c| c.im * kva).collect(),
            flows,
            solution,
        }
    }

    pub fn true_value(&self, entry: &MeasurementEntry) -> f64 {
        match (entry.kind, entry.location) {
            (MeasKind::VBus, Location::Bus(b)) => self.solution.v_mag_pu[b],
            (MeasKind::PBus, Location::Bus(b)) => self.bus_p_kw[b],
            (MeasKind::QBus, Location::Bus(b)) => self.bus_q_kvar[b],
            (kind, Location::Line { line, end }) => {
                let f = &self.flows[line];
                match (kind, end) {
                    (MeasKind::PLine, LineEnd::From) => f.p_from_kw,
                    (MeasKind::PLine, LineEnd::To) => f.p_to_kw,
                    (MeasKind::QLine, LineEnd::From) => f.q_from_kvar,
                    (MeasKind::QLine, LineEnd::To) => f.q_to_kvar,
                    (MeasKind::ILine, LineEnd::From) => f.i_from_amps,
                    (MeasKind::ILine, LineEnd::To) => f.i_to_amps,
                    _ => unreachable!("bus kind at a line location"),
                }
            }
            _ => unreachable!("line kind at a bus location"),
        }
    }

    pub fn true_values(&self, spec: &MeasurementSpec) -> Vec<f64> {
        spec.entries.iter().map(|e| self.true_value(e)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub values: Vec<f64>,
    pub switch_states: Vec<bool>,
    pub spec_hash: String,
    /// Relative SD in percent the estimator assumes for each entry.
    pub assumed_sd_pct: Vec<f64>,
}

impl MeasurementSet {
    /// Estimator input: values followed by switch states as 0/1.
    pub fn features(&self) -> Vec<f64> {
        self.values
            .iter()
            .copied()
            .chain(self.switch_states.iter().map(|&s| if s { 1.0 } else { 0.0 }))
            .collect()
    }
}

/// Applies relative Gaussian noise to given true values.
pub fn simulate_values(true_values: &[f64], spec: &MeasurementSpec, switch_states: &[bool], seed: u64) -> MeasurementSet {
    let mut rng = seeds::rng_from(seed);
    let values = true_values
        .iter()
        .zip(&spec.entries)
        .map(|(&t, e)| {
            let eps: f64 = rng.sample(StandardNormal);
            t * (1.0 + eps * e.sd_pct / 100.0)
        })
        .collect();
    MeasurementSet {
        values,
        switch_states: switch_states.to_vec(),
        spec_hash: spec.hash(),
        assumed_sd_pct: spec.entries.iter().map(|e| e.sd_pct).collect(),
    }
}

pub fn simulate(state: &SystemState, spec: &MeasurementSpec, switch_states: &[bool], seed: u64) -> MeasurementSet {
    simulate_values(&state.true_values(spec), spec, switch_states, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    ZeroValue,
    /// Value replaced by `factor` times the true value.
    ScaleValue { factor: f64 },
    ConstantSubstitute { value: f64 },
    /// Only the SD known to the estimator changes.
    WrongAssumedSd { sd_pct: f64 },
    /// The real power at the target bus is `factor` times what its
    /// measurement reports; applied to the scenario, not the measurement.
    PowerDeviation { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultTarget {
    Voltage { bus: usize },
    BusPower { bus: usize },
    LinePower { line: usize },
    Entry { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub kind: FaultKind,
    pub target: FaultTarget,
}

impl FaultTarget {
    pub fn entry_indices(&self, spec: &MeasurementSpec) -> Vec<usize> {
        spec.entries
            .iter()
            .enumerate()
            .filter(|(i, e)| match *self {
                FaultTarget::Voltage { bus } => e.kind == MeasKind::VBus && e.bus() == Some(bus),
                FaultTarget::BusPower { bus } => {
                    matches!(e.kind, MeasKind::PBus | MeasKind::QBus) && e.bus() == Some(bus)
                }
                FaultTarget::LinePower { line } => {
                    matches!(e.kind, MeasKind::PLine | MeasKind::QLine) && e.line().map(|l| l.0) == Some(line)
                }
                FaultTarget::Entry { index } => *i == index,
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Bus power deviations requested by `PowerDeviation` faults.
pub fn power_deviations(faults: &[FaultInjection]) -> Vec<(usize, f64)> {
    faults
        .iter()
        .filter_map(|f| match (f.kind, f.target) {
            (FaultKind::PowerDeviation { factor }, FaultTarget::BusPower { bus }) => Some((bus, factor)),
            _ => None,
        })
        .collect()
}

/// Applies a measurement-side fault. `true_values` are the noise-free values
/// aligned with `spec`.
pub fn inject_fault(
    ms: &MeasurementSet,
    spec: &MeasurementSpec,
    fault: &FaultInjection,
    true_values: &[f64],
) -> Result<MeasurementSet> {
    if let FaultKind::PowerDeviation { .. } = fault.kind {
        return match fault.target {
            FaultTarget::BusPower { .. } => Ok(ms.clone()),
            t => Err(Error::FaultTarget(format!("power deviation needs a bus target, got {t:?}"))),
        };
    }
    let idx = fault.target.entry_indices(spec);
    if idx.is_empty() {
        return Err(Error::FaultTarget(format!("{:?}", fault.target)));
    }
    let mut out = ms.clone();
    for i in idx {
        match fault.kind {
            FaultKind::ZeroValue => out.values[i] = 0.0,
            FaultKind::ScaleValue { factor } => out.values[i] = factor * true_values[i],
            FaultKind::ConstantSubstitute { value } => out.values[i] = value,
            FaultKind::WrongAssumedSd { sd_pct } => out.assumed_sd_pct[i] = sd_pct,
            FaultKind::PowerDeviation { .. } => unreachable!(),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::load_grid;

    fn grid() -> GridModel {
        load_grid(concat!(env!("CARGO_MANIFEST_DIR"), "/data/cigre_mv_modified.toml")).unwrap()
    }

    fn m4(g: &GridModel) -> MeasurementSpec {
        let l = |a, b| g.line_between(a, b).unwrap();
        MeasurementSpec::new()
            .voltage(0)
            .voltage(6)
            .voltage(8)
            .voltage(10)
            .bus_power(4)
            .bus_power(7)
            .line_power(l(1, 2), LineEnd::From)
            .line_power(l(12, 13), LineEnd::From)
    }

    #[test]
    fn accuracy_classes() {
        assert!((accuracy_to_sd(Accuracy::VoltageClass(0.5)).unwrap() - 0.166_666_7).abs() < 1e-6);
        assert!((accuracy_to_sd(Accuracy::CurrentClass(1.0)).unwrap() - 0.5).abs() < 1e-12);
        assert!((accuracy_to_sd(Accuracy::Power).unwrap() - 0.666_666_7).abs() < 1e-6);
        assert!(accuracy_to_sd(Accuracy::VoltageClass(0.7)).is_err());
    }

    #[test]
    fn spec_file_round_trip_keeps_hash() {
        let g = grid();
        let spec = m4(&g);
        assert_eq!(spec.len(), 12);
        let back = MeasurementSpec::from_toml(&spec.to_toml(), "t").unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
        back.validate(&g).unwrap();
        let bad = MeasurementSpec::new().voltage(99);
        assert!(bad.validate(&g).is_err());
    }

    fn state(g: &GridModel) -> SystemState {
        let view = g.apply_switch_config(&g.configs()[0]).unwrap();
        let axes = crate::scenario::default_axes();
        let s = crate::scenario::generate_set(&axes, g, 1, 1).unwrap();
        SystemState::solve(&view, &s[555].injections(g)).unwrap()
    }

    #[test]
    fn zero_sd_reproduces_truth() {
        let g = grid();
        let mut spec = m4(&g);
        for e in &mut spec.entries {
            e.sd_pct = 0.0;
        }
        let st = state(&g);
        let ms = simulate(&st, &spec, &[true; 6], 4);
        assert_eq!(ms.values, st.true_values(&spec));
        assert_eq!(ms.features().len(), 18);
    }

    #[test]
    fn same_seed_same_set() {
        let g = grid();
        let spec = m4(&g);
        let st = state(&g);
        assert_eq!(simulate(&st, &spec, &[], 9), simulate(&st, &spec, &[], 9));
        assert_ne!(simulate(&st, &spec, &[], 9).values, simulate(&st, &spec, &[], 10).values);
    }

    #[test]
    fn slack_voltage_noise_statistics() {
        let spec = MeasurementSpec::new().voltage(0);
        let n = 100_000;
        let vals: Vec<f64> = (0..n).map(|k| simulate_values(&[1.0], &spec, &[], k).values[0]).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() < 1e-4);
        assert!((sd - 0.5 / 300.0).abs() / (0.5 / 300.0) < 0.05);
    }

    #[test]
    fn bus_measurement_equals_unit_injection() {
        let g = grid();
        let view = g.apply_switch_config(&g.configs()[0]).unwrap();
        let s = crate::scenario::generate_set(&crate::scenario::default_axes(), &g, 1, 3).unwrap();
        let inj = s[100].injections(&g);
        let st = SystemState::solve(&view, &inj).unwrap();
        for b in 1..g.n_bus() {
            assert!((st.bus_p_kw[b] - inj.p_pu[b] * 1e3).abs() < 1e-4);
            assert!((st.bus_q_kvar[b] - inj.q_pu[b] * 1e3).abs() < 1e-4);
        }
    }

    #[test]
    fn faults_touch_only_targets() {
        let g = grid();
        let spec = m4(&g);
        let st = state(&g);
        let truth = st.true_values(&spec);
        let ms = simulate(&st, &spec, &[], 1);
        let f1 = FaultInjection {
            kind: FaultKind::ZeroValue,
            target: FaultTarget::Voltage { bus: 8 },
        };
        let out = inject_fault(&ms, &spec, &f1, &truth).unwrap();
        assert_eq!(out.values[2], 0.0);
        for i in (0..12).filter(|&i| i != 2) {
            assert_eq!(out.values[i], ms.values[i]);
        }
        let f4 = FaultInjection {
            kind: FaultKind::ScaleValue { factor: 1.5 },
            target: FaultTarget::Voltage { bus: 8 },
        };
        let out = inject_fault(&ms, &spec, &f4, &truth).unwrap();
        assert!((out.values[2] - 1.5 * truth[2]).abs() < 1e-15);
        let fake_truth: Vec<f64> = truth.iter().enumerate().map(|(i, &t)| if i == 2 { 0.98 } else { t }).collect();
        let out = inject_fault(&ms, &spec, &f4, &fake_truth).unwrap();
        assert!((out.values[2] - 1.47).abs() < 1e-12);
        let f2 = FaultInjection {
            kind: FaultKind::ZeroValue,
            target: FaultTarget::LinePower { line: g.line_between(1, 2).unwrap() },
        };
        let out = inject_fault(&ms, &spec, &f2, &truth).unwrap();
        assert_eq!(&out.values[8..10], &[0.0, 0.0]);
        let f6 = FaultInjection {
            kind: FaultKind::WrongAssumedSd { sd_pct: 2.0 },
            target: FaultTarget::BusPower { bus: 4 },
        };
        let out = inject_fault(&ms, &spec, &f6, &truth).unwrap();
        assert_eq!(out.values, ms.values);
        assert_eq!(&out.assumed_sd_pct[4..6], &[2.0, 2.0]);
        let missing = FaultInjection {
            kind: FaultKind::ZeroValue,
            target: FaultTarget::Voltage { bus: 3 },
        };
        assert!(matches!(inject_fault(&ms, &spec, &missing, &truth), Err(Error::FaultTarget(_))));
    }

    #[test]
    fn power_deviation_composition() {
        let p0 = FaultInjection {
            kind: FaultKind::PowerDeviation { factor: 0.7 },
            target: FaultTarget::BusPower { bus: 4 },
        };
        let p2: Vec<_> = [5, 9, 10]
            .iter()
            .map(|&bus| FaultInjection {
                kind: FaultKind::PowerDeviation { factor: 1.3 },
                target: FaultTarget::BusPower { bus },
            })
            .collect();
        let mut p3 = vec![p0];
        p3.extend(p2);
        assert_eq!(power_deviations(&p3), vec![(4, 0.7), (5, 1.3), (9, 1.3), (10, 1.3)]);
    }
}
