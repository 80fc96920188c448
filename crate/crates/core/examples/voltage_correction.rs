//! Injects the catalog's voltage faults into clean measurements and lets the
//! outlier correction repair them.

use gridmon::correction::{correct_voltages, CorrectionConfig};
use gridmon::dataset::{build_truth, TruthOptions};
use gridmon::evaluation::case_measurements;
use gridmon::pipeline::{BUNDLED_CASES, BUNDLED_GRID};
use gridmon::scenario::{default_axes, generate_set};

fn main() -> gridmon::Result<()> {
    let grid = gridmon::grid::GridModel::from_toml(BUNDLED_GRID, "cigre")?;
    let catalog = gridmon::catalog::Catalog::from_toml(BUNDLED_CASES, "cases", &grid)?;
    let scenarios = generate_set(&default_axes(), &grid, 1, 5)?;
    let truth = build_truth(&grid, &scenarios[..50], &grid.configs(), &TruthOptions::default())?;
    let cfg = CorrectionConfig::default();
    for id in ["M4", "F0", "F1", "F4", "F7"] {
        let tc = catalog.get(id).expect("case in catalog");
        let idx = tc.spec.voltage_indices();
        let mut replaced = 0;
        for rec in &truth.records {
            let (ms, _) = case_measurements(tc, &truth, rec, 9, &cfg)?;
            replaced += correct_voltages(&ms, &tc.spec, &cfg).n_replaced();
        }
        let rec = &truth.records[17];
        let (ms, _) = case_measurements(tc, &truth, rec, 9, &cfg)?;
        let report = correct_voltages(&ms, &tc.spec, &cfg);
        let before: Vec<String> = idx.iter().map(|&i| format!("{:.3}", ms.values[i])).collect();
        let after: Vec<String> = idx.iter().map(|&i| format!("{:.3}", report.corrected.values[i])).collect();
        println!("{id}: [{}] -> [{}]", before.join(", "), after.join(", "));
        println!("    {replaced} replacements over {} measurement sets", truth.len());
    }
    Ok(())
}
