//! Five scenario axes (residential and commercial load, WEC, PV, batteries)
//! on the battery variant of the CIGRE grid.

use gridmon::dataset::{build_truth, TruthOptions};
use gridmon::grid::load_grid;
use gridmon::scenario::{enumerate_tuples, five_axes_coarse, generate_set};

fn main() -> gridmon::Result<()> {
    let grid = load_grid(concat!(env!("CARGO_MANIFEST_DIR"), "/data/cigre_mv.toml"))?;
    let axes = five_axes_coarse();
    println!("{} tuples per repetition", enumerate_tuples(&axes)?.len());
    let set = generate_set(&axes, &grid, 1, 8)?;
    let sample: Vec<_> = set.into_iter().step_by(50).collect();
    let truth = build_truth(&grid, &sample, &grid.configs(), &TruthOptions::default())?;
    let (lo, hi) = truth
        .records
        .iter()
        .flat_map(|r| r.state.solution.v_mag_pu.iter().copied())
        .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
    println!(
        "{} power flows ({} diverged), voltages between {lo:.4} and {hi:.4} pu",
        truth.len(),
        truth.failed
    );
    Ok(())
}
