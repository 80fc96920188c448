//! Scenario generator.
//!
//! Each axis spans the scaling range of one unit population (all loads, all
//! PV generators, ...). The Cartesian product of the axis grids yields the
//! scenario tuples; every unit is then scaled by its axis value and perturbed
//! individually with multiplicative Gaussian noise.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridModel, Unit, UnitKind};
use crate::hash::digest_hex;
use crate::powerflow::InjectionSet;
use crate::seeds::{self, Stream};

/// Unit population an axis applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AxisTarget {
    Kind(UnitKind),
    /// Units carrying this `group` tag.
    Group(String),
}

impl TryFrom<String> for AxisTarget {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Ok(match s.as_str() {
            "load" => AxisTarget::Kind(UnitKind::Load),
            "pv" => AxisTarget::Kind(UnitKind::Pv),
            "wec" => AxisTarget::Kind(UnitKind::Wec),
            "battery" => AxisTarget::Kind(UnitKind::Battery),
            "" => return Err("empty axis target".into()),
            _ => AxisTarget::Group(s),
        })
    }
}

impl From<AxisTarget> for String {
    fn from(t: AxisTarget) -> String {
        t.to_string()
    }
}

impl std::fmt::Display for AxisTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AxisTarget::Kind(k) => f.write_str(k.name()),
            AxisTarget::Group(g) => f.write_str(g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAxis {
    pub target: AxisTarget,
    pub min_pct: f64,
    pub max_pct: f64,
    pub step_pct: f64,
    pub noise_sd_pct: f64,
}

impl ScenarioAxis {
    pub fn new(target: AxisTarget, min_pct: f64, max_pct: f64, step_pct: f64, noise_sd_pct: f64) -> Self {
        ScenarioAxis {
            target,
            min_pct,
            max_pct,
            step_pct,
            noise_sd_pct,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.min_pct, self.max_pct, self.step_pct, self.noise_sd_pct]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.min_pct > self.max_pct || self.step_pct <= 0.0 || self.noise_sd_pct < 0.0 {
            return Err(Error::InvalidAxis(format!(
                "{}: need min <= max, step > 0, noise >= 0 (got {}..{} step {} noise {})",
                self.target, self.min_pct, self.max_pct, self.step_pct, self.noise_sd_pct
            )));
        }
        Ok(())
    }

    /// Inclusive grid of scaling values as fractions of nominal power.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.max_pct - self.min_pct) / self.step_pct + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| (self.min_pct + k as f64 * self.step_pct) / 100.0)
            .collect()
    }

    fn covers(&self, unit: &Unit) -> bool {
        match &self.target {
            AxisTarget::Kind(k) => *k == unit.kind,
            AxisTarget::Group(g) => unit.group.as_deref() == Some(g.as_str()),
        }
    }
}

/// Load 10-100 %, WEC 0-100 %, PV 0-90 %, all in 10 % steps; 1100 tuples.
pub fn default_axes() -> Vec<ScenarioAxis> {
    vec![
        ScenarioAxis::new(AxisTarget::Kind(UnitKind::Load), 10.0, 100.0, 10.0, 10.0),
        ScenarioAxis::new(AxisTarget::Kind(UnitKind::Wec), 0.0, 100.0, 10.0, 25.0),
        ScenarioAxis::new(AxisTarget::Kind(UnitKind::Pv), 0.0, 90.0, 10.0, 25.0),
    ]
}

/// Five populations in 20 % steps: residential and commercial loads, WEC,
/// PV and batteries (charging to discharging).
pub fn five_axes_coarse() -> Vec<ScenarioAxis> {
    vec![
        ScenarioAxis::new(AxisTarget::Group("residential".into()), 10.0, 100.0, 20.0, 10.0),
        ScenarioAxis::new(AxisTarget::Group("commercial".into()), 10.0, 100.0, 20.0, 10.0),
        ScenarioAxis::new(AxisTarget::Kind(UnitKind::Wec), 0.0, 100.0, 20.0, 25.0),
        ScenarioAxis::new(AxisTarget::Kind(UnitKind::Pv), 0.0, 100.0, 20.0, 25.0),
        ScenarioAxis::new(AxisTarget::Kind(UnitKind::Battery), -100.0, 100.0, 20.0, 25.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTuple {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitPower {
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// One entry per grid unit, in the unit's own sign convention.
    pub powers: Vec<UnitPower>,
    pub tuple: Option<ScenarioTuple>,
    pub repetition: usize,
    pub tuple_index: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn injections(&self, grid: &GridModel) -> InjectionSet {
        let mut inj = InjectionSet::zeros(grid.n_bus());
        let scale = 1.0 / (grid.s_base_mva * 1e3);
        for (u, pw) in grid.units.iter().zip(&self.powers) {
            let sign = u.kind.injection_sign();
            inj.p_pu[u.bus] += sign * pw.p_kw * scale;
            inj.q_pu[u.bus] += sign * pw.q_kvar * scale;
        }
        inj
    }

    /// Copy with all unit powers at the listed buses multiplied by a factor.
    pub fn with_bus_scaling(&self, grid: &GridModel, buses: &[(usize, f64)]) -> Scenario {
        let mut s = self.clone();
        for (u, pw) in grid.units.iter().zip(s.powers.iter_mut()) {
            for &(bus, factor) in buses {
                if u.bus == bus {
                    pw.p_kw *= factor;
                    pw.q_kvar *= factor;
                }
            }
        }
        s
    }
}

pub fn scenarios_hash(scenarios: &[Scenario]) -> String {
    let flat: Vec<f64> = scenarios
        .iter()
        .flat_map(|s| s.powers.iter().flat_map(|p| [p.p_kw, p.q_kvar]))
        .collect();
    let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
    digest_hex(&bytes)
}

/// Full Cartesian product of the axis grids; the first axis varies slowest.
pub fn enumerate_tuples(axes: &[ScenarioAxis]) -> Result<Vec<ScenarioTuple>> {
    if axes.is_empty() {
        return Err(Error::InvalidAxis("at least one axis is required".into()));
    }
    let grids = axes
        .iter()
        .map(|a| {
            a.validate()?;
            let v = a.values();
            if v.is_empty() {
                return Err(Error::InvalidAxis(format!("{}: empty grid", a.target)));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![ScenarioTuple { values: Vec::new() }];
    for grid in &grids {
        out = out
            .into_iter()
            .flat_map(|t| {
                grid.iter().map(move |&v| {
                    let mut values = t.values.clone();
                    values.push(v);
                    ScenarioTuple { values }
                })
            })
            .collect();
    }
    Ok(out)
}

fn axis_for_units(axes: &[ScenarioAxis], grid: &GridModel) -> Result<Vec<usize>> {
    grid.units
        .iter()
        .map(|u| {
            let group = axes
                .iter()
                .position(|a| matches!(a.target, AxisTarget::Group(_)) && a.covers(u));
            group
                .or_else(|| axes.iter().position(|a| a.covers(u)))
                .ok_or_else(|| Error::MissingAxis {
                    unit: u.id,
                    kind: u.kind.to_string(),
                })
        })
        .collect()
}

/// Expands one tuple into unit powers. `seed` fully determines the noise.
pub fn expand(axes: &[ScenarioAxis], tuple: &ScenarioTuple, grid: &GridModel, seed: u64) -> Result<Scenario> {
    if tuple.values.len() != axes.len() {
        return Err(Error::Dimension(format!(
            "tuple has {} values for {} axes",
            tuple.values.len(),
            axes.len()
        )));
    }
    let mapping = axis_for_units(axes, grid)?;
    Ok(expand_mapped(axes, &mapping, tuple, grid, seed, 0, 0))
}

fn expand_mapped(
    axes: &[ScenarioAxis],
    mapping: &[usize],
    tuple: &ScenarioTuple,
    grid: &GridModel,
    seed: u64,
    repetition: usize,
    tuple_index: usize,
) -> Scenario {
    let mut rng = seeds::rng_from(seed);
    let powers = grid
        .units
        .iter()
        .zip(mapping)
        .map(|(u, &a)| {
            let eps: f64 = rng.sample(StandardNormal);
            let factor = (1.0 + eps * axes[a].noise_sd_pct / 100.0).max(0.0);
            let p_kw = u.p_nom_kw * tuple.values[a] * factor;
            UnitPower {
                p_kw,
                q_kvar: p_kw * u.q_per_p(),
            }
        })
        .collect();
    Scenario {
        powers,
        tuple: Some(tuple.clone()),
        repetition,
        tuple_index,
        seed,
    }
}

/// `repetitions` noise draws over the full tuple grid, repetition-major.
pub fn generate_set(axes: &[ScenarioAxis], grid: &GridModel, repetitions: usize, seed: u64) -> Result<Vec<Scenario>> {
    if repetitions == 0 {
        return Err(Error::InvalidAxis("repetitions must be >= 1".into()));
    }
    let tuples = enumerate_tuples(axes)?;
    let mapping = axis_for_units(axes, grid)?;
    let jobs: Vec<(usize, usize)> = (0..repetitions)
        .flat_map(|r| (0..tuples.len()).map(move |t| (r, t)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(r, t)| {
            let s = seeds::derive(seed, Stream::Scenario, &[r as u64, t as u64]);
            expand_mapped(axes, &mapping, &tuples[t], grid, s, r, t)
        })
        .collect())
}

fn csv_header(grid: &GridModel) -> Vec<String> {
    grid.units
        .iter()
        .flat_map(|u| [format!("unit_{}_p_kw", u.id), format!("unit_{}_q_kvar", u.id)])
        .collect()
}

/// Writes scenarios as CSV, one row per scenario. `comment` lines are
/// prefixed with `#` before the header.
pub fn export_scenarios(path: impl AsRef<Path>, grid: &GridModel, scenarios: &[Scenario], comment: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for c in comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::parse(path.display().to_string(), e);
    w.write_record(csv_header(grid)).map_err(csv_err)?;
    for s in scenarios {
        let row: Vec<String> = s
            .powers
            .iter()
            .flat_map(|p| [format!("{:.6}", p.p_kw), format!("{:.6}", p.q_kvar)])
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads externally supplied scenarios (e.g. time-series replay). No noise is
/// added; columns must match the grid's units.
pub fn import_scenarios(path: impl AsRef<Path>, grid: &GridModel) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(&ctx, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(&ctx, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != csv_header(grid) {
        return Err(Error::Dimension(format!(
            "{ctx}: header has {} columns, grid with {} units expects {}",
            header.len(),
            grid.units.len(),
            2 * grid.units.len()
        )));
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(&ctx, e))?;
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::parse(format!("{ctx} row {}", row + 1), e)))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 2 * grid.units.len() {
            return Err(Error::Dimension(format!("{ctx} row {}: wrong column count", row + 1)));
        }
        out.push(Scenario {
            powers: vals
                .chunks(2)
                .map(|c| UnitPower { p_kw: c[0], q_kvar: c[1] })
                .collect(),
            tuple: None,
            repetition: 0,
            tuple_index: row,
            seed: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridModel {
        crate::grid::load_grid(concat!(env!("CARGO_MANIFEST_DIR"), "/data/cigre_mv_modified.toml")).unwrap()
    }

    #[test]
    fn default_axes_give_1100_tuples() {
        assert_eq!(enumerate_tuples(&default_axes()).unwrap().len(), 1100);
    }

    #[test]
    fn five_axes_count_by_direct_enumeration() {
        let axes = five_axes_coarse();
        // Count by brute force nested loops over integer percentages.
        let mut count = 0;
        for _res in (10..=100).step_by(20) {
            for _com in (10..=100).step_by(20) {
                for _wec in (0..=100).step_by(20) {
                    for _pv in (0..=100).step_by(20) {
                        for _bat in (-100..=100).step_by(20) {
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(count, 5 * 5 * 6 * 6 * 11);
        assert_eq!(enumerate_tuples(&axes).unwrap().len(), count);
    }

    #[test]
    fn three_point_grid() {
        let axis = ScenarioAxis::new(AxisTarget::Kind(UnitKind::Load), 0.0, 100.0, 50.0, 0.0);
        let t = enumerate_tuples(&[axis]).unwrap();
        let v: Vec<f64> = t.iter().map(|t| t.values[0]).collect();
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn invalid_axes_rejected() {
        assert!(enumerate_tuples(&[]).is_err());
        let bad = ScenarioAxis::new(AxisTarget::Kind(UnitKind::Load), 50.0, 10.0, 10.0, 0.0);
        assert!(enumerate_tuples(&[bad]).is_err());
        let bad = ScenarioAxis::new(AxisTarget::Kind(UnitKind::Load), 0.0, 10.0, 0.0, 0.0);
        assert!(enumerate_tuples(&[bad]).is_err());
    }

    #[test]
    fn zero_noise_nominal_tuple_is_nominal_power() {
        let g = grid();
        let axes: Vec<_> = default_axes()
            .into_iter()
            .map(|mut a| {
                a.noise_sd_pct = 0.0;
                a
            })
            .collect();
        let s = expand(&axes, &ScenarioTuple { values: vec![1.0, 1.0, 1.0] }, &g, 3).unwrap();
        for (u, p) in g.units.iter().zip(&s.powers) {
            assert_eq!(p.p_kw, u.p_nom_kw);
            assert!((p.q_kvar - u.p_nom_kw * u.q_per_p()).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_axis_is_an_error() {
        let g = grid();
        let axes = vec![ScenarioAxis::new(AxisTarget::Kind(UnitKind::Load), 10.0, 100.0, 10.0, 10.0)];
        let err = expand(&axes, &ScenarioTuple { values: vec![0.5] }, &g, 0).unwrap_err();
        assert!(matches!(err, Error::MissingAxis { .. }));
    }

    #[test]
    fn mean_scaling_tracks_tuple_value() {
        let g = grid();
        let axes = default_axes();
        let tuple = ScenarioTuple { values: vec![0.9, 0.7, 0.8] };
        let n = 10_000;
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for k in 0..n {
            let s = expand(&axes, &tuple, &g, k).unwrap();
            for (u, p) in g.units.iter().zip(&s.powers) {
                let idx = match u.kind {
                    UnitKind::Load => 0,
                    UnitKind::Wec => 1,
                    UnitKind::Pv => 2,
                    UnitKind::Battery => unreachable!(),
                };
                sums[idx] += p.p_kw / u.p_nom_kw;
                counts[idx] += 1;
            }
        }
        for (i, target) in [0.9, 0.7, 0.8].iter().enumerate() {
            let mean = sums[i] / counts[i] as f64;
            assert!((mean - target).abs() / target < 0.01, "axis {i}: mean {mean}");
        }
    }

    #[test]
    fn set_sizes_and_seed_streams() {
        let g = grid();
        let axes = default_axes();
        assert_eq!(generate_set(&axes, &g, 1, 5).unwrap().len(), 1100);
        let a = generate_set(&axes, &g, 2, 5).unwrap();
        let b = generate_set(&axes, &g, 2, 5).unwrap();
        assert_eq!(a.len(), 2200);
        assert_eq!(a, b);
        assert_ne!(a[0].powers, a[1100].powers);
        assert_eq!(a[0].tuple, a[1100].tuple);
    }

    #[test]
    fn clamp_frequency_matches_gaussian_tail() {
        // sd 25 %: P(1 + 0.25 N < 0) = P(N < -4) ~ 3.2e-5.
        let g = grid();
        let axes = default_axes();
        let set = generate_set(&axes, &g, 3, 11).unwrap();
        let (mut zero, mut total) = (0usize, 0usize);
        for s in &set {
            let t = s.tuple.as_ref().unwrap();
            for (u, p) in g.units.iter().zip(&s.powers) {
                assert!(p.p_kw >= 0.0 && p.p_kw.is_finite());
                if u.kind == UnitKind::Pv && t.values[2] > 0.0 {
                    total += 1;
                    if p.p_kw == 0.0 {
                        zero += 1;
                    }
                }
            }
        }
        assert!((zero as f64) / (total as f64) < 5e-4, "{zero} / {total}");
    }

    #[test]
    fn csv_round_trip_and_dimension_check() {
        let g = grid();
        let set = generate_set(&default_axes(), &g, 1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        export_scenarios(&path, &g, &set[..5], &["seed=2".into()]).unwrap();
        let back = import_scenarios(&path, &g).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in set.iter().zip(&back) {
            for (x, y) in a.powers.iter().zip(&b.powers) {
                assert!((x.p_kw - y.p_kw).abs() < 1e-5);
            }
        }
        let mut small = g.clone();
        small.units.pop();
        assert!(matches!(import_scenarios(&path, &small), Err(Error::Dimension(_))));
    }
}
