//! Trains the voltage and loading networks for the M4 placement and
//! estimates one unseen scenario.

use gridmon::dataset::{build_training_set, build_truth, measure, targets, TruthOptions};
use gridmon::monitor::{train_monitor, MonitorConfig};
use gridmon::pipeline::{BUNDLED_CASES, BUNDLED_GRID};
use gridmon::scenario::{default_axes, generate_set};

fn main() -> gridmon::Result<()> {
    let grid = gridmon::grid::GridModel::from_toml(BUNDLED_GRID, "cigre")?;
    let catalog = gridmon::catalog::Catalog::from_toml(BUNDLED_CASES, "cases", &grid)?;
    let spec = &catalog.get("M4").expect("M4 in catalog").spec;

    let train = generate_set(&default_axes(), &grid, 1, 1)?;
    let truth = build_truth(&grid, &train, &grid.configs(), &TruthOptions::default())?;
    let data = build_training_set(&grid, &truth, spec, 2)?;
    println!("{} training samples, {} inputs", data.len(), data.x[0].len());

    let (monitor, history) = train_monitor(&data, &MonitorConfig::default().seeded(3))?;
    println!(
        "voltage net: {} epochs, best validation RMSE {:.2e} pu",
        history.voltage.epochs.len(),
        history.voltage.best_val_loss.sqrt()
    );
    println!(
        "loading net: {} epochs, best validation RMSE {:.2e}",
        history.loading.epochs.len(),
        history.loading.best_val_loss.sqrt()
    );

    let test = generate_set(&default_axes(), &grid, 1, 99)?;
    let test_truth = build_truth(&grid, &test[300..301], &grid.configs(), &TruthOptions::default())?;
    let rec = &test_truth.records[2];
    let est = monitor.estimate(&measure(&test_truth, rec, spec, &[], 4))?;
    let (v, l) = targets(&grid, &rec.state);
    for (b, (t, e)) in v.iter().zip(&est.v_pu).enumerate() {
        println!("bus {b:2}: true {t:.4} pu, estimated {e:.4} pu");
    }
    let worst = l.iter().zip(&est.loading).map(|(a, b)| (a - b).abs() * 100.0).fold(0.0, f64::max);
    println!("largest loading error {worst:.2} percentage points");
    Ok(())
}
