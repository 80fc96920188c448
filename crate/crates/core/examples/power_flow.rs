//! Solves the power flow of one generated scenario under every switch
//! configuration of the bundled CIGRE grid.

use gridmon::grid::GridModel;
use gridmon::measurement::SystemState;
use gridmon::pipeline::BUNDLED_GRID;
use gridmon::scenario::{default_axes, generate_set};

fn main() -> gridmon::Result<()> {
    let grid = GridModel::from_toml(BUNDLED_GRID, "cigre")?;
    let scenario = &generate_set(&default_axes(), &grid, 1, 7)?[555];
    println!("tuple (load, wec, pv) = {:?}", scenario.tuple.as_ref().map(|t| &t.values));
    for (k, config) in grid.configs().iter().enumerate() {
        let view = grid.apply_switch_config(config)?;
        let state = SystemState::solve(&view, &scenario.injections(&grid))?;
        let sol = &state.solution;
        let (vmin, vmax) = sol.v_mag_pu.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let worst = grid
            .monitored_lines()
            .into_iter()
            .max_by(|&a, &b| sol.loading_pct[a].total_cmp(&sol.loading_pct[b]))
            .unwrap();
        println!(
            "config {k}: {} iterations, V in [{vmin:.4}, {vmax:.4}] pu, slack {:.0} kW, max loading {:.1} % on line {worst}",
            sol.iterations, sol.p_slack_kw, sol.loading_pct[worst]
        );
    }
    Ok(())
}
