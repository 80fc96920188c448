mod common;

use gridmon::ann::{init_model, AnnArchitecture, Standardizer};
use gridmon::correction::{correct_voltages, CorrectionConfig};
use gridmon::dataset::{build_truth, measure, TruthOptions};
use gridmon::evaluation::{ScenarioErrors, C1, C2};
use gridmon::measurement::{MeasurementSet, MeasurementSpec};
use gridmon::scenario::{default_axes, generate_set, AxisTarget, ScenarioAxis};
use gridmon::grid::UnitKind;
use proptest::prelude::*;

fn voltage_set(voltages: &[f64], powers: &[f64]) -> (MeasurementSet, MeasurementSpec) {
    let mut spec = MeasurementSpec::new();
    for b in 0..voltages.len() {
        spec = spec.voltage(b);
    }
    for b in 0..powers.len() / 2 {
        spec = spec.bus_power(b);
    }
    let mut values = voltages.to_vec();
    values.extend_from_slice(&powers[..powers.len() / 2 * 2]);
    let ms = MeasurementSet {
        assumed_sd_pct: spec.entries.iter().map(|e| e.sd_pct).collect(),
        values,
        switch_states: vec![],
        spec_hash: spec.hash(),
    };
    (ms, spec)
}

fn gate_strategy() -> impl Strategy<Value = CorrectionConfig> {
    prop_oneof![Just(CorrectionConfig::default()), Just(CorrectionConfig { min_sd_pu: 0.0, ..Default::default() })]
}

proptest! {
    #[test]
    fn correction_is_idempotent(
        voltages in prop::collection::vec(prop_oneof![4 => 0.9f64..1.1, 1 => 0.0f64..2.0], 3..12),
        powers in prop::collection::vec(-500.0f64..500.0, 0..6),
        cfg in gate_strategy(),
    ) {
        let (ms, spec) = voltage_set(&voltages, &powers);
        let once = correct_voltages(&ms, &spec, &cfg);
        let twice = correct_voltages(&once.corrected, &spec, &cfg);
        prop_assert_eq!(twice.n_replaced(), 0);
        prop_assert_eq!(&twice.corrected, &once.corrected);
    }

    #[test]
    fn correction_leaves_other_entries_bit_identical(
        voltages in prop::collection::vec(prop_oneof![0.9f64..1.1, 0.0f64..2.0], 0..10),
        powers in prop::collection::vec(-500.0f64..500.0, 2..8),
        cfg in gate_strategy(),
    ) {
        let (ms, spec) = voltage_set(&voltages, &powers);
        let r = correct_voltages(&ms, &spec, &cfg);
        let n_v = voltages.len();
        for (a, b) in r.corrected.values[n_v..].iter().zip(&ms.values[n_v..]) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert!(r.substitutes.iter().all(|(i, _)| *i < n_v));
    }

    #[test]
    fn c2_success_implies_c1_success(v in 0.0f64..3.0, l in 0.0f64..30.0) {
        let e = ScenarioErrors { max_v_err_pct: v, max_loading_err_pct: l };
        prop_assert!(!e.meets(&C2) || e.meets(&C1));
    }

    #[test]
    fn standardizer_round_trips(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..20),
        probe in prop::collection::vec(-1e3f64..1e3, 4),
    ) {
        let s = Standardizer::fit(rows.iter().map(|r| r.as_slice()), 4, 1);
        let mut fwd = vec![0.0; 4];
        let mut back = vec![0.0; 4];
        s.forward(&probe, &mut fwd);
        s.inverse(&fwd, &mut back);
        for (a, b) in back.iter().zip(&probe) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        prop_assert_eq!(fwd[3], probe[3]);
    }

    #[test]
    fn scenario_count_is_product_of_axis_sizes(
        steps in prop::collection::vec(1usize..4, 3),
        reps in 1usize..3,
    ) {
        let g = common::cigre();
        let kinds = [UnitKind::Load, UnitKind::Wec, UnitKind::Pv];
        let axes: Vec<ScenarioAxis> = kinds
            .iter()
            .zip(&steps)
            .map(|(&k, &n)| ScenarioAxis::new(AxisTarget::Kind(k), 10.0, 10.0 + 20.0 * (n - 1) as f64, 20.0, 10.0))
            .collect();
        let set = generate_set(&axes, &g, reps, 5).unwrap();
        prop_assert_eq!(set.len(), reps * steps.iter().product::<usize>());
        for s in &set {
            prop_assert!(s.powers.iter().all(|p| p.p_kw >= 0.0 && p.p_kw.is_finite()));
        }
    }

    #[test]
    fn saved_model_predicts_identically(seed in 0u64..1000, x in prop::collection::vec(-5.0f64..5.0, 6)) {
        let model = init_model(&AnnArchitecture::new(6, 3), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = gridmon::ann::AnnModel::load(&path).unwrap();
        prop_assert_eq!(back.predict_features(&x), model.predict_features(&x));
    }
}

#[test]
fn correction_rarely_touches_clean_data() {
    let g = common::cigre();
    let spec = common::catalog(&g).get("M4").unwrap().spec.clone();
    let scenarios = generate_set(&default_axes(), &g, 1, 31).unwrap();
    let truth = build_truth(&g, &scenarios, &g.configs(), &TruthOptions::default()).unwrap();
    let cfg = CorrectionConfig::default();
    let touched = truth
        .records
        .iter()
        .filter(|rec| correct_voltages(&measure(&truth, rec, &spec, &[], 77), &spec, &cfg).n_replaced() > 0)
        .count();
    let rate = touched as f64 / truth.len() as f64;
    assert!(rate < 0.01, "false-positive rate {rate}");
}
