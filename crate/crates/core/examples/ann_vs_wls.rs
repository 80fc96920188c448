//! Trains and evaluates M4 through the run pipeline and compares both
//! estimators on identical measurements.

use gridmon::evaluation::error_stats;
use gridmon::pipeline::{Run, RunConfig};

fn main() -> gridmon::Result<()> {
    let out = std::env::temp_dir().join("gridmon_ann_vs_wls");
    let run = Run::new(RunConfig {
        cases: vec!["M4".into(), "M8".into()],
        train_repetitions: 1,
        out,
        ..RunConfig::default()
    })?;
    run.train()?;
    let results = run.evaluate()?;
    for r in &results {
        println!("{:3} {}: SR(C1) {:6.2} %, SR(C2) {:6.2} %", r.case, r.method, 100.0 * r.sr_c1, 100.0 * r.sr_c2);
    }
    let m4: Vec<_> = results.iter().filter(|r| r.case == "M4").cloned().collect();
    let (buses, _) = error_stats(&run.grid, &m4);
    println!("M4 voltage errors (%), sorted by WLS maximum:");
    for row in buses {
        let (a, w) = (row.ann.unwrap(), row.wls.unwrap());
        println!("{:6} ann mean {:.3} max {:.3} | wls mean {:.3} max {:.3}", row.element, a.mean, a.max, w.mean, w.max);
    }
    println!("CSV output in {}", run.cfg.out.display());
    Ok(())
}
