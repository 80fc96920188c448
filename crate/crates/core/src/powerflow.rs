//! Newton-Raphson AC power flow in polar coordinates.
//!
//! The power flow produces the noise-free system state from which training
//! targets, measurements and evaluation truth are derived. It always starts
//! flat (1.0 pu, 0 rad) and converges to a 1e-10 pu mismatch.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, GridView};

pub const MAX_ITERATIONS: usize = 30;
pub const TOLERANCE: f64 = 1e-10;

/// Net bus injections in per-unit, generation positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSet {
    pub p_pu: Vec<f64>,
    pub q_pu: Vec<f64>,
}

impl InjectionSet {
    pub fn zeros(n_bus: usize) -> Self {
        InjectionSet {
            p_pu: vec![0.0; n_bus],
            q_pu: vec![0.0; n_bus],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        InjectionSet {
            p_pu: self.p_pu.iter().map(|p| p * factor).collect(),
            q_pu: self.q_pu.iter().map(|q| q * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub v_mag_pu: Vec<f64>,
    pub v_ang_rad: Vec<f64>,
    /// Current magnitude at the from-end of every line.
    pub i_line_amps: Vec<f64>,
    /// Current magnitude at the to-end of every line.
    pub i_to_amps: Vec<f64>,
    /// Larger of both end currents relative to the rating, in percent.
    pub loading_pct: Vec<f64>,
    pub p_slack_kw: f64,
    pub q_slack_kvar: f64,
    pub iterations: usize,
}

impl PfSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        complex_voltages(&self.v_mag_pu, &self.v_ang_rad)
    }

    /// Loading of the given lines as a fraction of their ratings.
    pub fn loading_fraction(&self, lines: &[usize]) -> Vec<f64> {
        lines.iter().map(|&l| self.loading_pct[l] / 100.0).collect()
    }
}

pub fn complex_voltages(mag: &[f64], ang: &[f64]) -> Vec<Complex64> {
    mag.iter()
        .zip(ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect()
}

/// Complex power injections `S = V * conj(Y V)`.
pub fn bus_injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let current: Complex64 = (0..n).map(|k| y[(i, k)] * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

/// Flows at both ends of a line, in physical units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub p_from_kw: f64,
    pub q_from_kvar: f64,
    pub p_to_kw: f64,
    pub q_to_kvar: f64,
    pub i_from_amps: f64,
    pub i_to_amps: f64,
}

impl LineFlow {
    pub fn p_loss_kw(&self) -> f64 {
        self.p_from_kw + self.p_to_kw
    }
}

/// End currents (per-unit) of a line for the given bus voltages.
pub(crate) fn end_currents(view: &GridView<'_>, line: usize, v: &[Complex64]) -> (Complex64, Complex64) {
    if !view.line_in_service(line) {
        return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    }
    let l = &view.grid().lines[line];
    let br = view.branch(line);
    let (vf, vt) = (v[l.from_bus], v[l.to_bus]);
    (
        br.end_self() * vf - br.series * vt,
        br.end_self() * vt - br.series * vf,
    )
}

pub fn solve_pf(view: &GridView<'_>, injections: &InjectionSet) -> Result<PfSolution> {
    let grid = view.grid();
    let n = grid.n_bus();
    if injections.p_pu.len() != n || injections.q_pu.len() != n {
        return Err(Error::Dimension(format!(
            "injection vectors have {} / {} entries for {n} buses",
            injections.p_pu.len(),
            injections.q_pu.len()
        )));
    }
    if injections.p_pu.iter().chain(&injections.q_pu).any(|x| !x.is_finite()) {
        return Err(Error::Dimension("non-finite injection".into()));
    }
    let y = build_admittance(view);
    let slack = grid.slack();
    let pq: Vec<usize> = (0..n).filter(|&b| b != slack && view.energized(b)).collect();
    let m = pq.len();

    let mut mag: Vec<f64> = (0..n).map(|b| if view.energized(b) { 1.0 } else { 0.0 }).collect();
    let mut ang = vec![0.0; n];

    let mut iterations = 0;
    loop {
        let v = complex_voltages(&mag, &ang);
        let s = bus_injections(&y, &v);
        let mut mismatch = DVector::zeros(2 * m);
        for (r, &b) in pq.iter().enumerate() {
            mismatch[r] = injections.p_pu[b] - s[b].re;
            mismatch[m + r] = injections.q_pu[b] - s[b].im;
        }
        let norm = mismatch.amax();
        if norm < TOLERANCE {
            break;
        }
        if iterations >= MAX_ITERATIONS || !norm.is_finite() {
            return Err(Error::Divergence {
                iterations,
                mismatch: norm,
            });
        }
        let jac = jacobian(&y, &v, &pq);
        let dx = jac.lu().solve(&mismatch).ok_or(Error::Divergence {
            iterations,
            mismatch: norm,
        })?;
        for (c, &b) in pq.iter().enumerate() {
            ang[b] += dx[c];
            mag[b] += dx[m + c];
        }
        iterations += 1;
    }

    let v = complex_voltages(&mag, &ang);
    let s = bus_injections(&y, &v);
    let mut i_from = vec![0.0; grid.lines.len()];
    let mut i_to = vec![0.0; grid.lines.len()];
    let mut loading = vec![0.0; grid.lines.len()];
    for l in &grid.lines {
        let (cf, ct) = end_currents(view, l.id, &v);
        let ib = grid.i_base_amps(l.from_bus);
        i_from[l.id] = cf.norm() * ib;
        i_to[l.id] = ct.norm() * ib;
        loading[l.id] = 100.0 * i_from[l.id].max(i_to[l.id]) / l.rating_amps;
    }
    let s_kva = grid.s_base_mva * 1e3;
    Ok(PfSolution {
        v_mag_pu: mag,
        v_ang_rad: ang,
        i_line_amps: i_from,
        i_to_amps: i_to,
        loading_pct: loading,
        p_slack_kw: s[slack].re * s_kva,
        q_slack_kvar: s[slack].im * s_kva,
        iterations,
    })
}

/// Jacobian of [P; Q] at `rows` w.r.t. [theta; |V|] at the same buses.
fn jacobian(y: &DMatrix<Complex64>, v: &[Complex64], buses: &[usize]) -> DMatrix<f64> {
    let n = v.len();
    let m = buses.len();
    let current: Vec<Complex64> = (0..n)
        .map(|i| (0..n).map(|k| y[(i, k)] * v[k]).sum())
        .collect();
    let j = Complex64::new(0.0, 1.0);
    let mut jac = DMatrix::zeros(2 * m, 2 * m);
    for (r, &i) in buses.iter().enumerate() {
        for (c, &k) in buses.iter().enumerate() {
            let unit_k = v[k] / v[k].norm();
            let mut ds_dang = v[i] * (y[(i, k)] * j * v[k]).conj();
            let mut ds_dmag = v[i] * (y[(i, k)] * unit_k).conj();
            if i == k {
                ds_dang += j * v[i] * current[i].conj();
                ds_dmag += unit_k * current[i].conj();
            }
            jac[(r, c)] = ds_dang.re;
            jac[(m + r, c)] = ds_dang.im;
            jac[(r, m + c)] = ds_dmag.re;
            jac[(m + r, m + c)] = ds_dmag.im;
        }
    }
    jac
}

/// Complex flows at both ends of every line.
pub fn derive_line_quantities(solution: &PfSolution, view: &GridView<'_>) -> Vec<LineFlow> {
    let grid = view.grid();
    let v = solution.voltages();
    let s_kva = grid.s_base_mva * 1e3;
    grid.lines
        .iter()
        .map(|l| {
            if !view.line_in_service(l.id) {
                return LineFlow::default();
            }
            let (cf, ct) = end_currents(view, l.id, &v);
            let sf = v[l.from_bus] * cf.conj() * s_kva;
            let st = v[l.to_bus] * ct.conj() * s_kva;
            let ib = grid.i_base_amps(l.from_bus);
            LineFlow {
                p_from_kw: sf.re,
                q_from_kvar: sf.im,
                p_to_kw: st.re,
                q_to_kvar: st.im,
                i_from_amps: cf.norm() * ib,
                i_to_amps: ct.norm() * ib,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridModel;

    const TWO_BUS: &str = r#"
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
"#;

    #[test]
    fn zero_injection_is_flat() {
        let g = GridModel::from_toml(TWO_BUS, "t").unwrap();
        let view = g.apply_switch_config(&[]).unwrap();
        let sol = solve_pf(&view, &InjectionSet::zeros(2)).unwrap();
        assert_eq!(sol.v_mag_pu, vec![1.0, 1.0]);
        assert_eq!(sol.iterations, 0);
        assert!(sol.i_line_amps.iter().all(|&i| i == 0.0));
    }

    #[test]
    fn two_bus_matches_closed_form() {
        let g = GridModel::from_toml(TWO_BUS, "t").unwrap();
        let view = g.apply_switch_config(&[]).unwrap();
        let (p, q, x) = (0.1, 0.02, 0.1);
        let inj = InjectionSet {
            p_pu: vec![0.0, -p],
            q_pu: vec![0.0, -q],
        };
        let sol = solve_pf(&view, &inj).unwrap();
        // V^4 + (2 Q x - 1) V^2 + x^2 (P^2 + Q^2) = 0, upper root.
        let b = 2.0 * q * x - 1.0;
        let c = x * x * (p * p + q * q);
        let v2 = ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt();
        assert!((sol.v_mag_pu[1] - v2).abs() < 1e-8);
        let flows = derive_line_quantities(&sol, &view);
        assert!((flows[0].p_from_kw + flows[0].p_to_kw).abs() < 1e-6);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let g = GridModel::from_toml(TWO_BUS, "t").unwrap();
        let view = g.apply_switch_config(&[]).unwrap();
        assert!(solve_pf(&view, &InjectionSet::zeros(3)).is_err());
    }

    #[test]
    fn impossible_load_diverges() {
        let g = GridModel::from_toml(TWO_BUS, "t").unwrap();
        let view = g.apply_switch_config(&[]).unwrap();
        let inj = InjectionSet {
            p_pu: vec![0.0, -50.0],
            q_pu: vec![0.0, -10.0],
        };
        assert!(matches!(solve_pf(&view, &inj), Err(Error::Divergence { .. })));
    }
}
