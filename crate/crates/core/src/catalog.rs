//! Test-case catalog: measurement placements, faults and topology errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ImpedanceError;
use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::measurement::{accuracy_to_sd, Accuracy, FaultInjection, FaultKind, FaultTarget, LineEnd, MeasurementSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub group: String,
    pub spec: MeasurementSpec,
    pub faults: Vec<FaultInjection>,
    pub impedance: Option<ImpedanceError>,
    /// Switch indices whose reported state is inverted.
    pub flip_switches: Vec<usize>,
    pub correction: bool,
}

impl TestCase {
    /// Case id, starred when voltage correction is active.
    pub fn label(&self) -> String {
        if self.correction {
            format!("{}*", self.id)
        } else {
            self.id.clone()
        }
    }

    pub fn with_correction(mut self, on: bool) -> Self {
        self.correction = on;
        self
    }

    /// Real bus power deviations to apply to the truth scenarios.
    pub fn bus_scaling(&self) -> Vec<(usize, f64)> {
        crate::measurement::power_deviations(&self.faults)
    }

    pub fn changes_truth(&self) -> bool {
        self.impedance.is_some() || !self.bus_scaling().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub cases: Vec<TestCase>,
}

impl Catalog {
    pub fn get(&self, id: &str) -> Option<&TestCase> {
        self.cases.iter().find(|c| c.id == id)
    }

    /// Cases by id, in the requested order.
    pub fn select(&self, ids: &[String]) -> Result<Vec<TestCase>> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .ok_or_else(|| Error::InvalidCase(format!("unknown test case {id}")))
            })
            .collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.cases.iter().map(|c| c.id.clone()).collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    format: u32,
    cases: Vec<RawCase>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    id: String,
    group: String,
    /// Inherit the measurement placement of another case.
    base: Option<String>,
    #[serde(default)]
    v: Vec<usize>,
    #[serde(default)]
    s_bus: Vec<usize>,
    #[serde(default)]
    s_line: Vec<[usize; 2]>,
    #[serde(default)]
    i_line: Vec<[usize; 2]>,
    #[serde(default)]
    faults: Vec<RawFault>,
    impedance: Option<RawImpedance>,
    impedance_uniform: Option<[f64; 2]>,
    #[serde(default)]
    flip_switches: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    kind: String,
    target: String,
    factor: Option<f64>,
    value: Option<f64>,
    max_error_pct: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImpedance {
    lines: Vec<[usize; 2]>,
    model_fraction: f64,
}

/// Line and measuring end for a line written as `a-b` (measured at `a`).
fn line_at(grid: &GridModel, [a, b]: [usize; 2]) -> Result<(usize, LineEnd)> {
    let l = grid
        .line_between(a, b)
        .ok_or_else(|| Error::InvalidCase(format!("no line {a}-{b}")))?;
    let end = if grid.lines[l].from_bus == a { LineEnd::From } else { LineEnd::To };
    Ok((l, end))
}

fn parse_target(grid: &GridModel, text: &str) -> Result<FaultTarget> {
    let bad = || Error::InvalidCase(format!("bad fault target {text:?}"));
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    match kind {
        "v" => Ok(FaultTarget::Voltage { bus: num(rest)? }),
        "s_bus" => Ok(FaultTarget::BusPower { bus: num(rest)? }),
        "s_line" => {
            let (a, b) = rest.split_once('-').ok_or_else(bad)?;
            Ok(FaultTarget::LinePower {
                line: line_at(grid, [num(a)?, num(b)?])?.0,
            })
        }
        "entry" => Ok(FaultTarget::Entry { index: num(rest)? }),
        _ => Err(bad()),
    }
}

fn parse_fault(grid: &GridModel, f: &RawFault) -> Result<FaultInjection> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::InvalidCase(format!("fault {} needs {name}", f.kind)));
    let kind = match f.kind.as_str() {
        "zero" => FaultKind::ZeroValue,
        "scale" => FaultKind::ScaleValue {
            factor: need(f.factor, "factor")?,
        },
        "constant" => FaultKind::ConstantSubstitute {
            value: need(f.value, "value")?,
        },
        "wrong_accuracy" => FaultKind::WrongAssumedSd {
            sd_pct: accuracy_to_sd(Accuracy::MaxErrorPct(need(f.max_error_pct, "max_error_pct")?))?,
        },
        "power_deviation" => FaultKind::PowerDeviation {
            factor: need(f.factor, "factor")?,
        },
        other => return Err(Error::InvalidCase(format!("unknown fault kind {other}"))),
    };
    Ok(FaultInjection {
        kind,
        target: parse_target(grid, &f.target)?,
    })
}

fn build_spec(grid: &GridModel, c: &RawCase) -> Result<MeasurementSpec> {
    let mut spec = MeasurementSpec::new();
    for &b in &c.v {
        spec = spec.voltage(b);
    }
    for &b in &c.s_bus {
        spec = spec.bus_power(b);
    }
    for &l in &c.s_line {
        let (line, end) = line_at(grid, l)?;
        spec = spec.line_power(line, end);
    }
    for &l in &c.i_line {
        let (line, end) = line_at(grid, l)?;
        spec = spec.line_current(line, end);
    }
    spec.validate(grid)?;
    Ok(spec)
}

impl Catalog {
    pub fn from_toml(text: &str, context: &str, grid: &GridModel) -> Result<Self> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        if file.format != 1 {
            return Err(Error::parse(context, format!("unsupported format {}", file.format)));
        }
        let mut cases: Vec<TestCase> = Vec::new();
        for raw in &file.cases {
            if cases.iter().any(|c| c.id == raw.id) {
                return Err(Error::InvalidCase(format!("duplicate case id {}", raw.id)));
            }
            let spec = match &raw.base {
                Some(base) => cases
                    .iter()
                    .find(|c| &c.id == base)
                    .ok_or_else(|| Error::InvalidCase(format!("{}: unknown base {base}", raw.id)))?
                    .spec
                    .clone(),
                None => build_spec(grid, raw)?,
            };
            let faults = raw.faults.iter().map(|f| parse_fault(grid, f)).collect::<Result<Vec<_>>>()?;
            let impedance = match (&raw.impedance, raw.impedance_uniform) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidCase(format!("{}: two impedance errors", raw.id)));
                }
                (Some(imp), None) => Some(ImpedanceError::Scaled {
                    lines: imp.lines.iter().map(|&l| line_at(grid, l).map(|x| x.0)).collect::<Result<_>>()?,
                    model_fraction: imp.model_fraction,
                }),
                (None, Some([low, high])) => Some(ImpedanceError::Uniform { low, high }),
                (None, None) => None,
            };
            if let Some(&s) = raw.flip_switches.iter().find(|&&s| s >= grid.switches.len()) {
                return Err(Error::InvalidCase(format!("{}: no switch {s}", raw.id)));
            }
            cases.push(TestCase {
                id: raw.id.clone(),
                group: raw.group.clone(),
                spec,
                faults,
                impedance,
                flip_switches: raw.flip_switches.clone(),
                correction: false,
            });
        }
        Ok(Catalog { cases })
    }

    pub fn load(path: impl AsRef<Path>, grid: &GridModel) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string(), grid)
    }
}
