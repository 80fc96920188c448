//! Electrical network model: buses, lines, switches and energy-resource units.
//!
//! A [`GridModel`] is loaded once from a TOML grid file and is immutable
//! afterwards. Switch configurations are applied through
//! [`GridModel::apply_switch_config`], which yields a cheap [`GridView`] that
//! the power flow and the estimators operate on.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::digest_hex;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub base_kv: f64,
}

/// Branch flavour. Transformer branches are modelled as series impedances and
/// are excluded from line-loading monitoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    #[default]
    Line,
    Cable,
    Overhead,
    Transformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    /// Total shunt susceptance in microsiemens.
    #[serde(default)]
    pub b_us: f64,
    pub rating_amps: f64,
    #[serde(default)]
    pub kind: LineKind,
}

impl Line {
    pub fn is_monitored(&self) -> bool {
        self.kind != LineKind::Transformer
    }

    pub fn other_end(&self, bus: usize) -> usize {
        if bus == self.from_bus {
            self.to_bus
        } else {
            self.from_bus
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub id: usize,
    pub line_id: usize,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Load,
    Pv,
    Wec,
    Battery,
}

impl UnitKind {
    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Load => "load",
            UnitKind::Pv => "pv",
            UnitKind::Wec => "wec",
            UnitKind::Battery => "battery",
        }
    }

    /// Sign of the unit's power as a bus injection (generation positive).
    pub fn injection_sign(self) -> f64 {
        match self {
            UnitKind::Load => -1.0,
            UnitKind::Pv | UnitKind::Wec | UnitKind::Battery => 1.0,
        }
    }

    pub fn is_generator(self) -> bool {
        matches!(self, UnitKind::Pv | UnitKind::Wec)
    }
}

impl std::fmt::Display for UnitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_cos_phi() -> f64 {
    0.97
}

/// A load or generator. Loads consume `p`, generators inject it, batteries
/// inject when positive (discharging) and consume when negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: usize,
    pub bus: usize,
    pub kind: UnitKind,
    /// Optional sub-population tag (e.g. `residential`), used to attach
    /// dedicated scenario axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub p_nom_kw: f64,
    #[serde(default = "default_cos_phi")]
    pub cos_phi: f64,
}

impl Unit {
    /// Reactive power per unit of active power.
    pub fn q_per_p(&self) -> f64 {
        self.cos_phi.acos().tan()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub switches: Vec<Switch>,
    pub units: Vec<Unit>,
    pub s_base_mva: f64,
    /// Named plausible switch configurations shipped with the grid.
    pub switch_configs: Vec<Vec<bool>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    format: u32,
    base: BaseSection,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    #[serde(default)]
    switches: Vec<Switch>,
    #[serde(default)]
    units: Vec<Unit>,
    #[serde(default)]
    switch_configs: Vec<Vec<bool>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseSection {
    s_base_mva: f64,
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<GridModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GridModel::from_toml(&text, &path.display().to_string())
}

impl GridModel {
    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        let file: GridFile = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        if file.format != FORMAT_VERSION {
            return Err(Error::parse(
                context,
                format!("unsupported format version {} (expected {FORMAT_VERSION})", file.format),
            ));
        }
        let grid = GridModel {
            buses: file.buses,
            lines: file.lines,
            switches: file.switches,
            units: file.units,
            s_base_mva: file.base.s_base_mva,
            switch_configs: file.switch_configs,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGrid(m));
        if !(self.s_base_mva > 0.0) {
            return bad(format!("s_base_mva must be positive, got {}", self.s_base_mva));
        }
        if self.buses.len() < 2 {
            return bad("a grid needs at least two buses".into());
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.id != i {
                return bad(format!("bus ids must be contiguous from 0; position {i} has id {}", b.id));
            }
            if !(b.base_kv > 0.0) {
                return bad(format!("bus {i}: base_kv must be positive"));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return bad(format!("exactly one slack bus required, found {slacks}"));
        }
        let nb = self.buses.len();
        for (i, l) in self.lines.iter().enumerate() {
            if l.id != i {
                return bad(format!("line ids must be contiguous from 0; position {i} has id {}", l.id));
            }
            if l.from_bus >= nb || l.to_bus >= nb {
                return bad(format!("line {i} references a missing bus"));
            }
            if l.from_bus == l.to_bus {
                return bad(format!("line {i}: from_bus equals to_bus"));
            }
            if !(l.r_ohm >= 0.0) {
                return bad(format!("line {i}: r_ohm must be >= 0"));
            }
            if l.x_ohm == 0.0 || !l.x_ohm.is_finite() {
                return bad(format!("line {i}: x_ohm must be finite and nonzero"));
            }
            if !(l.rating_amps > 0.0) {
                return bad(format!("line {i}: rating_amps must be positive"));
            }
            if !l.b_us.is_finite() {
                return bad(format!("line {i}: b_us must be finite"));
            }
        }
        let mut switched = vec![false; self.lines.len()];
        for (i, s) in self.switches.iter().enumerate() {
            if s.id != i {
                return bad(format!("switch ids must be contiguous from 0; position {i} has id {}", s.id));
            }
            if s.line_id >= self.lines.len() {
                return bad(format!("switch {i} references missing line {}", s.line_id));
            }
            if std::mem::replace(&mut switched[s.line_id], true) {
                return bad(format!("line {} carries more than one switch", s.line_id));
            }
        }
        for (i, u) in self.units.iter().enumerate() {
            if u.id != i {
                return bad(format!("unit ids must be contiguous from 0; position {i} has id {}", u.id));
            }
            if u.bus >= nb {
                return bad(format!("unit {i} references missing bus {}", u.bus));
            }
            let p_ok = match u.kind {
                UnitKind::Battery => u.p_nom_kw >= 0.0,
                _ => u.p_nom_kw > 0.0,
            };
            if !p_ok || !u.p_nom_kw.is_finite() {
                return bad(format!("unit {i}: p_nom_kw must be positive"));
            }
            if !(u.cos_phi > 0.0 && u.cos_phi <= 1.0) {
                return bad(format!("unit {i}: cos_phi must lie in (0, 1]"));
            }
        }
        for (k, cfg) in self.switch_configs.iter().enumerate() {
            if cfg.len() != self.switches.len() {
                return bad(format!(
                    "switch configuration {k} has {} entries for {} switches",
                    cfg.len(),
                    self.switches.len()
                ));
            }
        }
        let all_closed = vec![true; self.switches.len()];
        let energized = self.energized_buses(&self.line_mask(&all_closed));
        if let Some(b) = energized.iter().position(|e| !e) {
            return bad(format!("bus {b} is not connected even with all switches closed"));
        }
        for cfg in &self.switch_configs {
            self.apply_switch_config(cfg)?;
        }
        Ok(())
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated grid has a slack bus")
    }

    /// Current switch states as stored in the file.
    pub fn default_config(&self) -> Vec<bool> {
        self.switches.iter().map(|s| s.closed).collect()
    }

    /// Switch configurations to iterate over: the shipped list, or the file's
    /// switch states when none is shipped.
    pub fn configs(&self) -> Vec<Vec<bool>> {
        if self.switch_configs.is_empty() {
            vec![self.default_config()]
        } else {
            self.switch_configs.clone()
        }
    }

    pub fn monitored_lines(&self) -> Vec<usize> {
        self.lines.iter().filter(|l| l.is_monitored()).map(|l| l.id).collect()
    }

    /// Line connecting the two buses, in either orientation.
    pub fn line_between(&self, a: usize, b: usize) -> Option<usize> {
        self.lines
            .iter()
            .find(|l| (l.from_bus == a && l.to_bus == b) || (l.from_bus == b && l.to_bus == a))
            .map(|l| l.id)
    }

    pub fn z_base_ohm(&self, bus: usize) -> f64 {
        let kv = self.buses[bus].base_kv;
        kv * kv / self.s_base_mva
    }

    /// Base current in amperes at a bus.
    pub fn i_base_amps(&self, bus: usize) -> f64 {
        self.s_base_mva * 1e3 / (3f64.sqrt() * self.buses[bus].base_kv)
    }

    pub fn hash(&self) -> String {
        digest_hex(serde_json::to_vec(self).expect("grid serializes").as_slice())
    }

    /// Copy of the grid with the series impedance of the given lines divided
    /// by `model_fraction`: the returned grid is "reality" when the nominal
    /// model holds only `model_fraction` of the actual R and X.
    pub fn with_actual_impedance(&self, lines: &[(usize, f64)]) -> GridModel {
        let mut g = self.clone();
        for &(l, model_fraction) in lines {
            g.lines[l].r_ohm /= model_fraction;
            g.lines[l].x_ohm /= model_fraction;
        }
        g
    }

    fn line_mask(&self, config: &[bool]) -> Vec<bool> {
        let mut active = vec![true; self.lines.len()];
        for (s, &closed) in self.switches.iter().zip(config) {
            active[s.line_id] = closed;
        }
        active
    }

    fn energized_buses(&self, line_active: &[bool]) -> Vec<bool> {
        let n = self.n_bus();
        let mut adj = vec![Vec::new(); n];
        for l in self.lines.iter().filter(|l| line_active[l.id]) {
            adj[l.from_bus].push(l.to_bus);
            adj[l.to_bus].push(l.from_bus);
        }
        let mut seen = vec![false; n];
        let slack = self.slack();
        seen[slack] = true;
        let mut queue = VecDeque::from([slack]);
        while let Some(b) = queue.pop_front() {
            for &nb in &adj[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        seen
    }

    /// Applies a switch configuration (one entry per switch, `true` = closed).
    pub fn apply_switch_config(&self, config: &[bool]) -> Result<GridView<'_>> {
        if config.len() != self.switches.len() {
            return Err(Error::SwitchConfigLength {
                expected: self.switches.len(),
                got: config.len(),
            });
        }
        let line_active = self.line_mask(config);
        let energized = self.energized_buses(&line_active);
        for u in &self.units {
            if !energized[u.bus] && u.p_nom_kw > 0.0 {
                return Err(Error::Isolated { bus: u.bus });
            }
        }
        Ok(GridView {
            grid: self,
            config: config.to_vec(),
            line_active,
            energized,
        })
    }
}

/// A grid with a switch configuration applied.
#[derive(Debug, Clone, PartialEq)]
pub struct GridView<'a> {
    grid: &'a GridModel,
    config: Vec<bool>,
    line_active: Vec<bool>,
    energized: Vec<bool>,
}

/// Pi-model branch admittances in per-unit.
#[derive(Debug, Clone, Copy)]
pub struct BranchAdmittance {
    pub series: Complex64,
    /// Half of the total shunt susceptance, placed at each end.
    pub half_shunt: f64,
}

impl BranchAdmittance {
    /// Self admittance seen from either end.
    pub fn end_self(&self) -> Complex64 {
        self.series + Complex64::new(0.0, self.half_shunt)
    }
}

impl<'a> GridView<'a> {
    pub fn grid(&self) -> &'a GridModel {
        self.grid
    }

    pub fn config(&self) -> &[bool] {
        &self.config
    }

    pub fn line_in_service(&self, line: usize) -> bool {
        self.line_active[line]
    }

    pub fn energized(&self, bus: usize) -> bool {
        self.energized[bus]
    }

    pub fn active_lines(&self) -> impl Iterator<Item = &'a Line> + '_ {
        self.grid.lines.iter().filter(move |l| self.line_active[l.id])
    }

    pub fn branch(&self, line: usize) -> BranchAdmittance {
        let l = &self.grid.lines[line];
        let zb = self.grid.z_base_ohm(l.from_bus);
        let z = Complex64::new(l.r_ohm / zb, l.x_ohm / zb);
        BranchAdmittance {
            series: z.inv(),
            half_shunt: 0.5 * l.b_us * 1e-6 * zb,
        }
    }
}

/// Complex node admittance matrix in per-unit for the view's topology.
pub fn build_admittance(view: &GridView<'_>) -> DMatrix<Complex64> {
    let n = view.grid.n_bus();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for l in view.active_lines() {
        let br = view.branch(l.id);
        let (f, t) = (l.from_bus, l.to_bus);
        y[(f, f)] += br.end_self();
        y[(t, t)] += br.end_self();
        y[(f, t)] -= br.series;
        y[(t, f)] -= br.series;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = r#"
format = 1
[base]
s_base_mva = 1.0
[[buses]]
id = 0
kind = "slack"
base_kv = 10.0
[[buses]]
id = 1
kind = "pq"
base_kv = 10.0
[[lines]]
id = 0
from_bus = 0
to_bus = 1
r_ohm = 0.0
x_ohm = 10.0
rating_amps = 100.0
[[units]]
id = 0
bus = 1
kind = "load"
p_nom_kw = 100.0
cos_phi = 1.0
"#;

    #[test]
    fn two_bus_grid_is_valid() {
        let g = GridModel::from_toml(TWO_BUS, "two-bus").unwrap();
        assert_eq!(g.n_bus(), 2);
        assert_eq!(g.slack(), 0);
        assert!(g.switches.is_empty());
    }

    #[test]
    fn two_slack_buses_rejected() {
        let text = TWO_BUS.replace("kind = \"pq\"", "kind = \"slack\"");
        let err = GridModel::from_toml(&text, "t").unwrap_err();
        assert!(err.to_string().contains("exactly one slack"), "{err}");
    }

    #[test]
    fn parse_error_names_context() {
        let err = GridModel::from_toml("format = 1\n[base]\n", "broken.toml").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("broken.toml"));
    }

    #[test]
    fn wrong_format_version_rejected() {
        let text = TWO_BUS.replace("format = 1", "format = 2");
        assert!(GridModel::from_toml(&text, "t").is_err());
    }

    #[test]
    fn two_bus_admittance_hand_computed() {
        let g = GridModel::from_toml(TWO_BUS, "t").unwrap();
        let view = g.apply_switch_config(&[]).unwrap();
        let y = build_admittance(&view);
        // z = j0.1 pu, so y = -j10.
        assert!((y[(0, 1)] - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y[(1, 0)] - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y[(0, 0)] - Complex64::new(0.0, -10.0)).norm() < 1e-12);
        assert!((y[(1, 1)] - Complex64::new(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn open_switch_removes_stamp() {
        let text = format!("{TWO_BUS}\n[[switches]]\nid = 0\nline_id = 0\nclosed = true\n");
        let text = text.replace("[[units]]\nid = 0\nbus = 1", "[[units]]\nid = 0\nbus = 0");
        let g = GridModel::from_toml(&text, "t").unwrap();
        let view = g.apply_switch_config(&[false]).unwrap();
        let y = build_admittance(&view);
        assert_eq!(y[(0, 1)], Complex64::new(0.0, 0.0));
        assert!(!view.energized(1));
    }

    #[test]
    fn isolating_loaded_bus_is_an_error() {
        let text = format!("{TWO_BUS}\n[[switches]]\nid = 0\nline_id = 0\nclosed = true\n");
        let g = GridModel::from_toml(&text, "t").unwrap();
        assert!(matches!(g.apply_switch_config(&[false]), Err(Error::Isolated { bus: 1 })));
        assert!(matches!(
            g.apply_switch_config(&[true, true]),
            Err(Error::SwitchConfigLength { expected: 1, got: 2 })
        ));
    }
}
