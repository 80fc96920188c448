//! Reproduces the two earlier ANN approaches on M4: training on five extreme
//! operating points, and a single hidden layer of two sigmoid neurons.

use gridmon::pipeline::{compare_sota, Run, RunConfig, Split};

fn main() -> gridmon::Result<()> {
    let run = Run::new(RunConfig {
        cases: vec!["M4".into()],
        out: std::env::temp_dir().join("gridmon_sota"),
        ..RunConfig::default()
    })?;
    let tc = run.cases()?.remove(0);
    let (_, train) = run.truth(Split::Train)?;
    let (scenarios, test) = run.truth(Split::Test)?;
    let report = compare_sota(&run.grid, &tc, &train, (&scenarios, &test), &run.cfg.monitor, &run.seeds)?;
    let e = &report.extreme_training;
    println!("five extreme scenarios: SR(C1) {:.2} %, SR(C2) {:.2} %", 100.0 * e.sr_c1, 100.0 * e.sr_c2);
    let s = &report.small_network;
    println!(
        "1 x 2 sigmoid network: voltage SR(C1) {:.2} %, voltage SR(C2) {:.2} %",
        100.0 * s.voltage_sr_c1,
        100.0 * s.voltage_sr_c2
    );
    Ok(())
}
