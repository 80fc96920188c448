#![allow(dead_code)]

use gridmon::grid::GridModel;
use gridmon::pipeline::{BUNDLED_CASES, BUNDLED_GRID};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub fn cigre() -> GridModel {
    GridModel::from_toml(BUNDLED_GRID, "cigre").unwrap()
}

pub fn catalog(grid: &GridModel) -> gridmon::catalog::Catalog {
    gridmon::catalog::Catalog::from_toml(BUNDLED_CASES, "cases", grid).unwrap()
}

/// Two buses joined by one line of impedance `r + jx` ohm at 10 kV, 1 MVA base.
pub fn two_bus(r_ohm: f64, x_ohm: f64) -> GridModel {
    let text = format!(
        r#"
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
r_ohm = {r_ohm}
x_ohm = {x_ohm}
rating_amps = 100.0
"#
    );
    GridModel::from_toml(&text, "two-bus").unwrap()
}

/// Node admittance as `A^T diag(y) A` plus shunt terms, from the raw line data.
pub fn incidence_admittance(grid: &GridModel, active: &[bool]) -> DMatrix<Complex64> {
    let n = grid.buses.len();
    let lines: Vec<_> = grid.lines.iter().filter(|l| active[l.id]).collect();
    let mut a = DMatrix::from_element(lines.len(), n, Complex64::new(0.0, 0.0));
    let mut y_series = DMatrix::from_element(lines.len(), lines.len(), Complex64::new(0.0, 0.0));
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, l) in lines.iter().enumerate() {
        let kv = grid.buses[l.from_bus].base_kv;
        let zb = kv * kv / grid.s_base_mva;
        a[(k, l.from_bus)] = Complex64::new(1.0, 0.0);
        a[(k, l.to_bus)] = Complex64::new(-1.0, 0.0);
        y_series[(k, k)] = Complex64::new(1.0, 0.0) / Complex64::new(l.r_ohm / zb, l.x_ohm / zb);
        let half = Complex64::new(0.0, 0.5 * l.b_us * 1e-6 * zb);
        y[(l.from_bus, l.from_bus)] += half;
        y[(l.to_bus, l.to_bus)] += half;
    }
    y + a.transpose() * y_series * a
}

pub fn injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let vv = DVector::from_column_slice(v);
    let i = y * vv;
    v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

/// Rectangular Newton-Raphson with a central-difference Jacobian. Returns
/// complex voltages with the slack fixed at 1.0 pu.
pub fn rectangular_pf(y: &DMatrix<Complex64>, slack: usize, p: &[f64], q: &[f64]) -> Vec<Complex64> {
    let n = p.len();
    let pq: Vec<usize> = (0..n).filter(|&b| b != slack).collect();
    let m = pq.len();
    let voltages = |x: &DVector<f64>| -> Vec<Complex64> {
        let mut v = vec![Complex64::new(1.0, 0.0); n];
        for (k, &b) in pq.iter().enumerate() {
            v[b] = Complex64::new(x[k], x[m + k]);
        }
        v
    };
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let s = injections(y, &voltages(x));
        let mut r = DVector::zeros(2 * m);
        for (k, &b) in pq.iter().enumerate() {
            r[k] = s[b].re - p[b];
            r[m + k] = s[b].im - q[b];
        }
        r
    };
    let mut x = DVector::from_iterator(2 * m, (0..2 * m).map(|k| if k < m { 1.0 } else { 0.0 }));
    for _ in 0..50 {
        let r = residual(&x);
        if r.amax() < 1e-12 {
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for c in 0..2 * m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            jac.set_column(c, &((residual(&xp) - residual(&xm)) / (2.0 * h)));
        }
        x -= jac.lu().solve(&r).expect("oracle Jacobian is regular");
    }
    voltages(&x)
}
