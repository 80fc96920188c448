//! Generates the default scenario set, writes it as CSV and replays it.

use gridmon::grid::{GridModel, UnitKind};
use gridmon::pipeline::BUNDLED_GRID;
use gridmon::scenario::{default_axes, export_scenarios, generate_set, import_scenarios};

fn main() -> gridmon::Result<()> {
    let grid = GridModel::from_toml(BUNDLED_GRID, "cigre")?;
    let axes = default_axes();
    for a in &axes {
        println!("{}: {:?} (noise SD {} %)", a.target, a.values(), a.noise_sd_pct);
    }
    let set = generate_set(&axes, &grid, 3, 11)?;
    println!("{} scenarios from 3 repetitions", set.len());

    let total = |kind: UnitKind| -> f64 {
        set.iter()
            .map(|s| grid.units.iter().zip(&s.powers).filter(|(u, _)| u.kind == kind).map(|(_, p)| p.p_kw).sum::<f64>())
            .sum::<f64>()
            / set.len() as f64
    };
    println!("mean load {:.0} kW, wec {:.0} kW, pv {:.0} kW", total(UnitKind::Load), total(UnitKind::Wec), total(UnitKind::Pv));

    let dir = std::env::temp_dir().join("gridmon_scenarios");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("scenarios.csv");
    export_scenarios(&path, &grid, &set[..24], &["24 scenarios for replay".into()])?;
    let replay = import_scenarios(&path, &grid)?;
    println!("replayed {} scenarios from {}", replay.len(), path.display());
    Ok(())
}
