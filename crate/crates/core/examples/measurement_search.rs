//! Adds measurements one group at a time, buses first, until WLS reaches
//! SR(C1) = 100 % on a test sample.

use std::collections::HashMap;

use gridmon::catalog::TestCase;
use gridmon::dataset::{build_truth, TruthOptions};
use gridmon::evaluation::{default_pool, run_test_case, search_measurement_config, EvalContext, Method};
use gridmon::measurement::MeasurementSpec;
use gridmon::pipeline::BUNDLED_GRID;
use gridmon::scenario::{default_axes, generate_set};

fn main() -> gridmon::Result<()> {
    let grid = gridmon::grid::GridModel::from_toml(BUNDLED_GRID, "cigre")?;
    let scenarios: Vec<_> = generate_set(&default_axes(), &grid, 1, 21)?.into_iter().step_by(5).collect();
    let truth = build_truth(&grid, &scenarios, &grid.configs(), &TruthOptions::default())?;
    let ctx = EvalContext {
        grid: &grid,
        scenarios: &scenarios,
        truth: &truth,
        seed: 3,
        wls: Default::default(),
        correction: Default::default(),
        monitors: HashMap::new(),
    };
    let pool = default_pool(&grid, &[(1, 2), (4, 5), (8, 9), (3, 8), (6, 7)]);
    let result = search_measurement_config(&grid, MeasurementSpec::new().voltage(0), &pool, 1.0, |spec| {
        let tc = TestCase {
            id: "search".into(),
            group: "search".into(),
            spec: spec.clone(),
            faults: vec![],
            impedance: None,
            flip_switches: vec![],
            correction: false,
        };
        Ok(run_test_case(&ctx, &tc, &[Method::Wls])?[0].sr_c1)
    })?;
    for step in &result.trajectory {
        let added = step.added.map_or("start".to_string(), |p| p.to_string());
        println!("{added:>10}: {:2} measurements, WLS SR(C1) {:6.2} %", step.n_measurements, 100.0 * step.sr_c1);
    }
    println!("target reached: {}", result.reached);
    Ok(())
}
