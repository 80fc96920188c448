//! Weighted-least-squares state estimation with load-share pseudo
//! measurements for unmeasured buses.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, GridModel, GridView, UnitKind};
use crate::measurement::{LineEnd, Location, MeasKind, MeasurementEntry, MeasurementSet, MeasurementSpec};
use crate::powerflow::{complex_voltages, end_currents};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlsConfig {
    pub max_iterations: usize,
    /// Largest state update (rad or pu) at which iterations stop.
    pub tolerance: f64,
    /// Pseudo-measurement SD as a fraction of the pseudo value.
    pub pseudo_sd_fraction: f64,
    pub pseudo_sd_floor_kw: f64,
    /// Power factor used for pseudo reactive powers.
    pub cos_phi: f64,
    /// Relative DG power assumed when a kind cannot be inferred.
    pub dg_fallback: f64,
    /// Absolute floor on measurement SD in pu, keeping weights finite.
    pub sd_floor_pu: f64,
    /// Balance each grid part bounded by measured line flows separately
    /// instead of sharing one reference injection over all unmeasured buses.
    pub partitioned_balance: bool,
}

impl Default for WlsConfig {
    fn default() -> Self {
        WlsConfig {
            max_iterations: 10,
            tolerance: 1e-6,
            pseudo_sd_fraction: 0.30,
            pseudo_sd_floor_kw: 1.0,
            cos_phi: 0.97,
            dg_fallback: 0.5,
            sd_floor_pu: 1e-6,
            partitioned_balance: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoMeasurement {
    pub kind: MeasKind,
    pub bus: usize,
    /// kW or kvar, generation positive.
    pub value: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PseudoFlag {
    /// No measured bus is dominated by this DG kind.
    DgFallback(UnitKind),
    /// No power balance was available to infer the load level.
    LoadLevelFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoReport {
    pub pseudo: Vec<PseudoMeasurement>,
    /// Share of installed load drawn at unmeasured buses.
    pub load_level: f64,
    pub dg_relative: Vec<(UnitKind, f64)>,
    pub flags: Vec<PseudoFlag>,
}

/// Installed load (kW) and installed DG per kind (kW) at every bus.
fn installed(grid: &GridModel) -> (Vec<f64>, Vec<Vec<(UnitKind, f64)>>) {
    let mut load = vec![0.0; grid.n_bus()];
    let mut dg: Vec<Vec<(UnitKind, f64)>> = vec![Vec::new(); grid.n_bus()];
    for u in &grid.units {
        if u.kind == UnitKind::Load {
            load[u.bus] += u.p_nom_kw;
        } else {
            match dg[u.bus].iter_mut().find(|(k, _)| *k == u.kind) {
                Some((_, p)) => *p += u.p_nom_kw,
                None => dg[u.bus].push((u.kind, u.p_nom_kw)),
            }
        }
    }
    (load, dg)
}

fn measured_value(spec: &MeasurementSpec, ms: &MeasurementSet, kind: MeasKind, location: Location) -> Option<f64> {
    spec.entries
        .iter()
        .position(|e| e.kind == kind && e.location == location)
        .map(|i| ms.values[i])
}

/// Creates P/Q pseudo measurements for energized non-slack buses without a
/// real injection measurement. Unmeasured DG takes the relative power
/// inferred from measured buses dominated by DG of the same kind; the rest of
/// the power balance is shared by unmeasured loads in proportion to their
/// installed power.
pub fn build_pseudo(view: &GridView<'_>, spec: &MeasurementSpec, ms: &MeasurementSet, cfg: &WlsConfig) -> Result<PseudoReport> {
    let grid = view.grid();
    let n = grid.n_bus();
    let slack = grid.slack();
    let (load, dg) = installed(grid);
    let p_meas: Vec<Option<f64>> = (0..n)
        .map(|b| measured_value(spec, ms, MeasKind::PBus, Location::Bus(b)))
        .collect();
    let unmeasured: Vec<usize> = (0..n)
        .filter(|&b| b != slack && view.energized(b) && p_meas[b].is_none())
        .collect();
    let q_unmeasured: Vec<usize> = (0..n)
        .filter(|&b| {
            b != slack && view.energized(b) && measured_value(spec, ms, MeasKind::QBus, Location::Bus(b)).is_none()
        })
        .collect();

    // Split the grid at lines with measured active flow; each part's
    // injections balance the flows across its boundary (losses neglected).
    let mut cut = vec![None; grid.lines.len()];
    for (e, v) in spec.entries.iter().zip(&ms.values) {
        if let (MeasKind::PLine, Location::Line { line, end }) = (e.kind, e.location) {
            if view.line_in_service(line) && cut[line].is_none() {
                cut[line] = Some((end, *v));
            }
        }
    }
    let mut comp = components(view, &cut);
    let mut n_comp = comp.iter().flatten().max().map_or(0, |c| c + 1);
    let mut inflow = vec![0.0; n_comp];
    for l in &grid.lines {
        if let Some((end, p)) = cut[l.id] {
            let (at, other) = match end {
                LineEnd::From => (l.from_bus, l.to_bus),
                LineEnd::To => (l.to_bus, l.from_bus),
            };
            if let (Some(ca), Some(co)) = (comp[at], comp[other]) {
                if ca != co {
                    inflow[ca] -= p;
                    inflow[co] += p;
                }
            }
        }
    }
    let mut informed = vec![true; n_comp];
    if let Some(cs) = comp[slack] {
        match p_meas[slack] {
            Some(p) => inflow[cs] += p,
            None => informed[cs] = false,
        }
    }
    if !cfg.partitioned_balance {
        comp = (0..n).map(|b| view.energized(b).then_some(0)).collect();
        n_comp = 1;
        let p_ref = reference_injection(view, &cut, p_meas[slack]);
        inflow = vec![p_ref.unwrap_or(0.0)];
        informed = vec![p_ref.is_some()];
    }

    let kinds: Vec<UnitKind> = {
        let mut k: Vec<UnitKind> = unmeasured
            .iter()
            .flat_map(|&b| dg[b].iter().map(|(k, _)| *k))
            .collect();
        k.sort_by_key(|k| k.name());
        k.dedup();
        k
    };
    let dg_nom = |b: usize, kind: UnitKind| dg[b].iter().find(|(k, _)| *k == kind).map_or(0.0, |(_, p)| *p);
    // Measured non-slack buses dominated by one DG kind.
    let anchors: Vec<(UnitKind, Vec<usize>)> = kinds
        .iter()
        .map(|&k| {
            let buses = (0..n)
                .filter(|&b| b != slack && p_meas[b].is_some() && dg_nom(b, k) > 0.0 && dg_nom(b, k) >= load[b])
                .collect();
            (k, buses)
        })
        .collect();

    let mut flags = Vec::new();
    let mut rel: Vec<(UnitKind, f64)> = kinds.iter().map(|&k| (k, cfg.dg_fallback)).collect();
    for (k, buses) in &anchors {
        if buses.is_empty() {
            flags.push(PseudoFlag::DgFallback(*k));
        }
    }
    let rel_of = |rel: &[(UnitKind, f64)], k: UnitKind| rel.iter().find(|(j, _)| *j == k).map_or(cfg.dg_fallback, |(_, r)| *r);
    let dg_est = |rel: &[(UnitKind, f64)], b: usize| dg[b].iter().map(|(k, p)| rel_of(rel, *k) * p).sum::<f64>();

    let level_from = |rel: &[(UnitKind, f64)]| -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for c in (0..n_comp).filter(|&c| informed[c]) {
            num += inflow[c];
            for b in (0..n).filter(|&b| comp[b] == Some(c) && b != slack) {
                match p_meas[b] {
                    Some(p) => num += p,
                    None => {
                        num += dg_est(rel, b);
                        den += load[b];
                    }
                }
            }
        }
        (den > 0.0).then(|| num / den)
    };

    let mut level = cfg.dg_fallback;
    for _ in 0..50 {
        level = level_from(&rel).unwrap_or(cfg.dg_fallback);
        let mut next = rel.clone();
        for (k, buses) in &anchors {
            if buses.is_empty() {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &b in buses {
                let others: f64 = dg[b].iter().filter(|(j, _)| j != k).map(|(j, p)| rel_of(&rel, *j) * p).sum();
                num += p_meas[b].unwrap() + level * load[b] - others;
                den += dg_nom(b, *k);
            }
            next.iter_mut().find(|(j, _)| j == k).unwrap().1 = num / den;
        }
        let converged = next.iter().zip(&rel).all(|(a, b)| (a.1 - b.1).abs() < 1e-12);
        rel = next;
        if converged {
            break;
        }
    }
    if level_from(&rel).is_none() && unmeasured.iter().any(|&b| load[b] > 0.0) {
        flags.push(PseudoFlag::LoadLevelFallback);
    }

    let tan_phi = (1.0 / (cfg.cos_phi * cfg.cos_phi) - 1.0).sqrt();
    let p_pseudo = |b: usize| dg_est(&rel, b) - level * load[b];
    let sd = |v: f64| (cfg.pseudo_sd_fraction * v.abs()).max(cfg.pseudo_sd_floor_kw);
    let mut pseudo = Vec::new();
    for &b in &unmeasured {
        let p = p_pseudo(b);
        pseudo.push(PseudoMeasurement {
            kind: MeasKind::PBus,
            bus: b,
            value: p,
            sd: sd(p),
        });
    }
    for &b in &q_unmeasured {
        let p = p_meas[b].unwrap_or_else(|| p_pseudo(b));
        let q = tan_phi * p;
        pseudo.push(PseudoMeasurement {
            kind: MeasKind::QBus,
            bus: b,
            value: q,
            sd: sd(q),
        });
    }
    Ok(PseudoReport {
        pseudo,
        load_level: level,
        dg_relative: rel,
        flags,
    })
}

/// Power entering the grid at the slack bus, from the first available of:
/// the slack injection measurement; measured flows on every branch at the
/// slack; measured flows leaving the buses behind those branches.
fn reference_injection(view: &GridView<'_>, cut: &[Option<(LineEnd, f64)>], p_slack: Option<f64>) -> Option<f64> {
    if p_slack.is_some() {
        return p_slack;
    }
    let grid = view.grid();
    let slack = grid.slack();
    // Power leaving `bus` into line `l` from its measurement, if any.
    let leaving = |l: usize, bus: usize| -> Option<f64> {
        let line = &grid.lines[l];
        cut[l].map(|(end, p)| {
            let at = if end == LineEnd::From { line.from_bus } else { line.to_bus };
            if at == bus {
                p
            } else {
                -p
            }
        })
    };
    let heads: Vec<_> = view
        .active_lines()
        .filter(|l| l.from_bus == slack || l.to_bus == slack)
        .map(|l| (l.id, l.other_end(slack)))
        .collect();
    if heads.is_empty() {
        return None;
    }
    if let Some(total) = heads.iter().map(|&(l, _)| leaving(l, slack)).sum::<Option<f64>>() {
        return Some(total);
    }
    let mut total = None;
    for &(head, bus) in &heads {
        for l in view.active_lines().filter(|l| l.id != head && (l.from_bus == bus || l.to_bus == bus)) {
            if let Some(p) = leaving(l.id, bus) {
                *total.get_or_insert(0.0) += p;
            }
        }
    }
    total
}

/// Connected parts of the energized grid after removing the cut lines.
fn components(view: &GridView<'_>, cut: &[Option<(LineEnd, f64)>]) -> Vec<Option<usize>> {
    let grid = view.grid();
    let n = grid.n_bus();
    let mut adj = vec![Vec::new(); n];
    for l in view.active_lines().filter(|l| cut[l.id].is_none()) {
        adj[l.from_bus].push(l.to_bus);
        adj[l.to_bus].push(l.from_bus);
    }
    let mut comp = vec![None; n];
    let mut next = 0;
    for start in (0..n).filter(|&b| view.energized(b)) {
        if comp[start].is_some() {
            continue;
        }
        comp[start] = Some(next);
        let mut stack = vec![start];
        while let Some(b) = stack.pop() {
            for &nb in &adj[b] {
                if comp[nb].is_none() {
                    comp[nb] = Some(next);
                    stack.push(nb);
                }
            }
        }
        next += 1;
    }
    comp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlsEstimate {
    pub v_mag_pu: Vec<f64>,
    pub v_ang_rad: Vec<f64>,
    /// Loading of monitored lines as a fraction of rating.
    pub loading: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted squared residual after each iteration's update.
    pub objective: Vec<f64>,
}

/// One measurement row in per-unit.
struct Row {
    kind: MeasKind,
    location: Location,
    z: f64,
    weight: f64,
}

struct Model<'v, 'g> {
    view: &'v GridView<'g>,
    y: DMatrix<Complex64>,
    /// State columns: angle index per bus (slack excluded), magnitude index per bus.
    ang_col: Vec<Option<usize>>,
    mag_col: Vec<Option<usize>>,
    n_state: usize,
}

impl Model<'_, '_> {
    fn build<'v, 'g>(view: &'v GridView<'g>) -> Model<'v, 'g> {
        let grid = view.grid();
        let n = grid.n_bus();
        let slack = grid.slack();
        let energized: Vec<usize> = (0..n).filter(|&b| view.energized(b)).collect();
        let mut ang_col = vec![None; n];
        let mut mag_col = vec![None; n];
        let mut col = 0;
        for &b in energized.iter().filter(|&&b| b != slack) {
            ang_col[b] = Some(col);
            col += 1;
        }
        for &b in &energized {
            mag_col[b] = Some(col);
            col += 1;
        }
        Model {
            view,
            y: build_admittance(view),
            ang_col,
            mag_col,
            n_state: col,
        }
    }

    /// Adds `ds` contributions for a voltage-direction derivative at `bus`.
    fn add(&self, row: &mut [Complex64], bus: usize, d_ang: Complex64, d_mag: Complex64) {
        if let Some(c) = self.ang_col[bus] {
            row[c] += d_ang;
        }
        if let Some(c) = self.mag_col[bus] {
            row[c] += d_mag;
        }
    }

    /// Value and complex derivative row of one measurement function.
    fn eval(&self, kind: MeasKind, loc: Location, v: &[Complex64]) -> (f64, Vec<f64>) {
        let j = Complex64::new(0.0, 1.0);
        let unit = |b: usize| if v[b].norm() > 0.0 { v[b] / v[b].norm() } else { Complex64::new(1.0, 0.0) };
        let mut row = vec![Complex64::new(0.0, 0.0); self.n_state];
        let real_part = |row: Vec<Complex64>, im: bool| -> Vec<f64> { row.iter().map(|c| if im { c.im } else { c.re }).collect() };
        match (kind, loc) {
            (MeasKind::VBus, Location::Bus(b)) => {
                let mut r = vec![0.0; self.n_state];
                if let Some(c) = self.mag_col[b] {
                    r[c] = 1.0;
                }
                (v[b].norm(), r)
            }
            (MeasKind::PBus | MeasKind::QBus, Location::Bus(i)) => {
                let n = v.len();
                let current: Complex64 = (0..n).map(|k| self.y[(i, k)] * v[k]).sum();
                for k in (0..n).filter(|&k| self.y[(i, k)] != Complex64::new(0.0, 0.0) || k == i) {
                    let d_ang = v[i] * (self.y[(i, k)] * j * v[k]).conj();
                    let d_mag = v[i] * (self.y[(i, k)] * unit(k)).conj();
                    self.add(&mut row, k, d_ang, d_mag);
                }
                self.add(&mut row, i, j * v[i] * current.conj(), unit(i) * current.conj());
                let s = v[i] * current.conj();
                let im = kind == MeasKind::QBus;
                (if im { s.im } else { s.re }, real_part(row, im))
            }
            (_, Location::Line { line, end }) => {
                let l = &self.view.grid().lines[line];
                let (a, b) = match end {
                    LineEnd::From => (l.from_bus, l.to_bus),
                    LineEnd::To => (l.to_bus, l.from_bus),
                };
                if !self.view.line_in_service(line) {
                    return (0.0, vec![0.0; self.n_state]);
                }
                let br = self.view.branch(line);
                let (ya, yb) = (br.end_self(), -br.series);
                let current = ya * v[a] + yb * v[b];
                if kind == MeasKind::ILine {
                    let mag = current.norm();
                    if mag < 1e-12 {
                        return (mag, vec![0.0; self.n_state]);
                    }
                    // d|I| = Re(conj(I) dI) / |I|
                    let scale = current.conj() / mag;
                    self.add(&mut row, a, scale * ya * j * v[a], scale * ya * unit(a));
                    self.add(&mut row, b, scale * yb * j * v[b], scale * yb * unit(b));
                    return (mag, real_part(row, false));
                }
                let s = v[a] * current.conj();
                let (da_ang, da_mag) = (j * v[a], unit(a));
                self.add(
                    &mut row,
                    a,
                    da_ang * current.conj() + v[a] * (ya * da_ang).conj(),
                    da_mag * current.conj() + v[a] * (ya * da_mag).conj(),
                );
                self.add(&mut row, b, v[a] * (yb * j * v[b]).conj(), v[a] * (yb * unit(b)).conj());
                let im = kind == MeasKind::QLine;
                (if im { s.im } else { s.re }, real_part(row, im))
            }
            _ => (0.0, vec![0.0; self.n_state]),
        }
    }
}

fn rows(view: &GridView<'_>, spec: &MeasurementSpec, ms: &MeasurementSet, pseudo: &[PseudoMeasurement], cfg: &WlsConfig) -> Vec<Row> {
    let grid = view.grid();
    let kva = grid.s_base_mva * 1e3;
    let to_pu = |e: &MeasurementEntry| -> f64 {
        match (e.kind, e.location) {
            (MeasKind::VBus, _) => 1.0,
            (MeasKind::ILine, Location::Line { line, .. }) => 1.0 / grid.i_base_amps(grid.lines[line].from_bus),
            _ => 1.0 / kva,
        }
    };
    let mut out = Vec::new();
    for ((e, &value), &sd_pct) in spec.entries.iter().zip(&ms.values).zip(&ms.assumed_sd_pct) {
        let energized = match e.location {
            Location::Bus(b) => view.energized(b),
            Location::Line { line, .. } => view.line_in_service(line),
        };
        if !energized {
            continue;
        }
        let z = value * to_pu(e);
        let sd = (sd_pct / 100.0 * z.abs()).max(cfg.sd_floor_pu);
        out.push(Row {
            kind: e.kind,
            location: e.location,
            z,
            weight: 1.0 / (sd * sd),
        });
    }
    for p in pseudo {
        let sd = p.sd / kva;
        out.push(Row {
            kind: p.kind,
            location: Location::Bus(p.bus),
            z: p.value / kva,
            weight: 1.0 / (sd * sd),
        });
    }
    out
}

/// Gauss-Newton WLS from a flat start. Non-convergence is reported through
/// `converged`; a singular gain matrix is an observability error.
pub fn estimate(view: &GridView<'_>, spec: &MeasurementSpec, ms: &MeasurementSet, pseudo: &[PseudoMeasurement], cfg: &WlsConfig) -> Result<WlsEstimate> {
    if ms.values.len() != spec.len() || ms.assumed_sd_pct.len() != spec.len() {
        return Err(Error::Dimension(format!(
            "measurement set has {} values for a spec of {}",
            ms.values.len(),
            spec.len()
        )));
    }
    let grid = view.grid();
    let n = grid.n_bus();
    let model = Model::build(view);
    let rows = rows(view, spec, ms, pseudo, cfg);
    if rows.len() < model.n_state {
        return Err(Error::Unobservable);
    }
    let mut mag: Vec<f64> = (0..n).map(|b| if view.energized(b) { 1.0 } else { 0.0 }).collect();
    let mut ang = vec![0.0; n];
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let weights = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.weight));
    while iterations < cfg.max_iterations {
        let v = complex_voltages(&mag, &ang);
        let mut h = DMatrix::zeros(rows.len(), model.n_state);
        let mut r = DVector::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let (hx, d) = model.eval(row.kind, row.location, &v);
            r[i] = row.z - hx;
            for (c, x) in d.into_iter().enumerate() {
                h[(i, c)] = x;
            }
        }
        let ht_w = {
            let mut m = h.transpose();
            for (c, w) in weights.iter().enumerate() {
                m.column_mut(c).scale_mut(*w);
            }
            m
        };
        let gain = &ht_w * &h;
        let rhs = &ht_w * &r;
        let dx = match gain.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gain.lu().solve(&rhs).ok_or(Error::Unobservable)?,
        };
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(Error::Unobservable);
        }
        for b in 0..n {
            if let Some(c) = model.ang_col[b] {
                ang[b] += dx[c];
            }
            if let Some(c) = model.mag_col[b] {
                mag[b] += dx[c];
            }
        }
        iterations += 1;
        let v = complex_voltages(&mag, &ang);
        let j: f64 = rows
            .iter()
            .map(|row| row.weight * (row.z - model.eval(row.kind, row.location, &v).0).powi(2))
            .sum();
        objective.push(j);
        if dx.amax() < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let v = complex_voltages(&mag, &ang);
    let loading = grid
        .monitored_lines()
        .iter()
        .map(|&l| {
            let line = &grid.lines[l];
            let (cf, ct) = end_currents(view, l, &v);
            cf.norm().max(ct.norm()) * grid.i_base_amps(line.from_bus) / line.rating_amps
        })
        .collect();
    Ok(WlsEstimate {
        v_mag_pu: mag,
        v_ang_rad: ang,
        loading,
        converged,
        iterations,
        objective,
    })
}

/// Pseudo measurements plus estimation on the topology reported by the
/// measurement set's switch states.
pub fn run_wls(grid: &GridModel, spec: &MeasurementSpec, ms: &MeasurementSet, cfg: &WlsConfig) -> Result<WlsEstimate> {
    let view = grid.apply_switch_config(&ms.switch_states)?;
    let report = build_pseudo(&view, spec, ms, cfg)?;
    estimate(&view, spec, ms, &report.pseudo, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::load_grid;
    use crate::measurement::{simulate, SystemState};
    use crate::scenario::{default_axes, generate_set};

    fn cigre() -> GridModel {
        load_grid(concat!(env!("CARGO_MANIFEST_DIR"), "/data/cigre_mv_modified.toml")).unwrap()
    }

    fn exact(spec: &mut MeasurementSpec) {
        spec.entries.iter_mut().for_each(|e| e.sd_pct = 0.0);
    }

    #[test]
    fn fully_measured_noiseless_recovers_truth() {
        let g = cigre();
        let sc = generate_set(&default_axes(), &g, 1, 4).unwrap();
        for (k, cfg) in g.configs().iter().enumerate() {
            let view = g.apply_switch_config(cfg).unwrap();
            let st = SystemState::solve(&view, &sc[97 * (k + 1)].injections(&g)).unwrap();
            let mut spec = MeasurementSpec::new();
            for b in 0..g.n_bus() {
                spec = spec.voltage(b).bus_power(b);
            }
            let mut spec_exact = spec.clone();
            exact(&mut spec_exact);
            let mut ms = simulate(&st, &spec_exact, cfg, 1);
            ms.assumed_sd_pct = spec.entries.iter().map(|e| e.sd_pct).collect();
            let est = run_wls(&g, &spec, &ms, &WlsConfig::default()).unwrap();
            assert!(est.converged);
            for b in 0..g.n_bus() {
                assert!((est.v_mag_pu[b] - st.solution.v_mag_pu[b]).abs() < 1e-6);
                assert!((est.v_ang_rad[b] - st.solution.v_ang_rad[b]).abs() < 1e-6);
            }
            let truth = st.solution.loading_fraction(&g.monitored_lines());
            for (a, b) in est.loading.iter().zip(&truth) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn all_buses_measured_needs_no_pseudo() {
        let g = cigre();
        let view = g.apply_switch_config(&g.default_config()).unwrap();
        let mut spec = MeasurementSpec::new();
        for b in 0..g.n_bus() {
            spec = spec.bus_power(b);
        }
        let ms = MeasurementSet {
            values: vec![0.0; spec.len()],
            switch_states: g.default_config(),
            spec_hash: spec.hash(),
            assumed_sd_pct: vec![1.0; spec.len()],
        };
        let r = build_pseudo(&view, &spec, &ms, &WlsConfig::default()).unwrap();
        assert!(r.pseudo.is_empty());
    }

    const THREE_BUS: &str = r#"
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
[[buses]]
id = 2
kind = "pq"
base_kv = 10.0
[[lines]]
id = 0
from_bus = 0
to_bus = 1
r_ohm = 0.5
x_ohm = 1.0
rating_amps = 100.0
[[lines]]
id = 1
from_bus = 0
to_bus = 2
r_ohm = 0.5
x_ohm = 1.0
rating_amps = 100.0
[[units]]
id = 0
bus = 1
kind = "load"
p_nom_kw = 200.0
[[units]]
id = 1
bus = 2
kind = "load"
p_nom_kw = 200.0
"#;

    #[test]
    fn identical_unmeasured_loads_share_equally() {
        let g = GridModel::from_toml(THREE_BUS, "t").unwrap();
        let view = g.apply_switch_config(&[]).unwrap();
        let spec = MeasurementSpec::new().voltage(0).bus_power(0);
        let ms = MeasurementSet {
            values: vec![1.0, 100.0, 20.0],
            switch_states: vec![],
            spec_hash: spec.hash(),
            assumed_sd_pct: vec![0.1, 1.0, 1.0],
        };
        let r = build_pseudo(&view, &spec, &ms, &WlsConfig::default()).unwrap();
        let p: Vec<f64> = r.pseudo.iter().filter(|p| p.kind == MeasKind::PBus).map(|p| p.value).collect();
        assert_eq!(p.len(), 2);
        for x in p {
            assert!((x + 50.0).abs() < 1e-9);
        }
        assert!((r.load_level - 0.25).abs() < 1e-12);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn pseudo_powers_balance_slack_injection() {
        let g = cigre();
        let view = g.apply_switch_config(&g.default_config()).unwrap();
        let sc = generate_set(&default_axes(), &g, 1, 5).unwrap();
        let st = SystemState::solve(&view, &sc[321].injections(&g)).unwrap();
        let spec = MeasurementSpec::new().voltage(0).bus_power(0).bus_power(4).bus_power(7);
        let ms = simulate(&st, &spec, &g.default_config(), 3);
        let r = build_pseudo(&view, &spec, &ms, &WlsConfig::default()).unwrap();
        let pseudo_p: f64 = r.pseudo.iter().filter(|p| p.kind == MeasKind::PBus).map(|p| p.value).sum();
        let total = ms.values[1] + ms.values[3] + ms.values[5] + pseudo_p;
        assert!(total.abs() < 1e-6, "imbalance {total}");
    }

    #[test]
    fn tighter_duplicate_dominates() {
        let g = GridModel::from_toml(THREE_BUS, "t").unwrap();
        let view = g.apply_switch_config(&[]).unwrap();
        let spec = MeasurementSpec::new().voltage(0).voltage(1).voltage(1);
        let z = |a: f64, b: f64| MeasurementSet {
            values: vec![1.0, a, b],
            switch_states: vec![],
            spec_hash: spec.hash(),
            assumed_sd_pct: vec![0.01, 1.0, 0.5],
        };
        let loose: Vec<PseudoMeasurement> = [1, 2]
            .iter()
            .flat_map(|&bus| {
                [MeasKind::PBus, MeasKind::QBus].map(|kind| PseudoMeasurement {
                    kind,
                    bus,
                    value: 0.0,
                    sd: 1e4,
                })
            })
            .collect();
        let est = estimate(&view, &spec, &z(0.99, 0.97), &loose, &WlsConfig::default()).unwrap();
        let v1 = est.v_mag_pu[1];
        assert!((v1 - 0.97).abs() < (v1 - 0.99).abs());
    }

    #[test]
    fn objective_non_increasing_on_clean_m8() {
        let g = cigre();
        let view = g.apply_switch_config(&g.default_config()).unwrap();
        let sc = generate_set(&default_axes(), &g, 1, 6).unwrap();
        let st = SystemState::solve(&view, &sc[777].injections(&g)).unwrap();
        let mut spec = MeasurementSpec::new();
        for b in 0..g.n_bus() {
            spec = spec.voltage(b).bus_power(b);
        }
        let ms = simulate(&st, &spec, &g.default_config(), 9);
        let est = run_wls(&g, &spec, &ms, &WlsConfig::default()).unwrap();
        assert!(est.converged);
        assert!(est.objective.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    }
}
