//! Sweeps hidden-layer count and layer-size multiplier on M4.

use gridmon::pipeline::{Run, RunConfig};

fn main() -> gridmon::Result<()> {
    let run = Run::new(RunConfig {
        cases: vec!["M4".into()],
        train_repetitions: 1,
        out: std::env::temp_dir().join("gridmon_tuning"),
        ..RunConfig::default()
    })?;
    for r in run.tune(&[1, 2, 3], &[1, 2])? {
        println!(
            "{} layers x{}: {:3} neurons/layer, {:6} weights, SR(C1) {:6.2} %, SR(C2) {:6.2} %, {:.1} s",
            r.hidden_layers,
            r.multiplier,
            r.hidden_neurons,
            r.n_params,
            100.0 * r.sr_c1,
            100.0 * r.sr_c2,
            r.seconds
        );
    }
    Ok(())
}
