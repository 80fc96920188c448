//! Outlier detection and substitution for voltage measurements.

use serde::{Deserialize, Serialize};

use crate::measurement::{MeasurementSet, MeasurementSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    /// A removal counts as an outlier when the SD falls below this share of
    /// the previous SD.
    pub sd_ratio: f64,
    /// Sets whose SD is at or below this spread (pu) are left untouched. The
    /// default is half the width of a ±10 % voltage band: voltages inside the
    /// band cannot spread further, so only gross errors pass the gate.
    pub min_sd_pu: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            sd_ratio: 0.5,
            min_sd_pu: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryFlag {
    Kept,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub corrected: MeasurementSet,
    /// One flag per voltage entry, in spec order.
    pub flags: Vec<(usize, EntryFlag)>,
    /// `(entry index, substitute)` for every replacement.
    pub substitutes: Vec<(usize, f64)>,
    /// Fewer than three voltage entries: nothing was checked.
    pub skipped: bool,
}

impl CorrectionReport {
    pub fn n_replaced(&self) -> usize {
        self.substitutes.len()
    }
}

pub fn population_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Position of the outlier in `values` and the SD after removing it, if
/// removing the minimum or maximum shrinks the SD enough.
fn find_outlier(values: &[f64], cfg: &CorrectionConfig) -> Option<(usize, f64)> {
    let sd = population_sd(values);
    if sd <= cfg.min_sd_pu || sd == 0.0 {
        return None;
    }
    let without = |skip: usize| -> f64 {
        let rest: Vec<f64> = values.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, v)| *v).collect();
        population_sd(&rest)
    };
    let argmin = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b]))?;
    let argmax = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b]))?;
    [argmin, argmax]
        .into_iter()
        .map(|i| (i, without(i)))
        .filter(|&(_, s)| s < cfg.sd_ratio * sd)
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Replaces voltage outliers by the mean of the remaining voltage values,
/// repeating until no removal of the smallest or largest value shrinks the
/// SD below `sd_ratio` of its previous value.
pub fn correct_voltages(ms: &MeasurementSet, spec: &MeasurementSpec, cfg: &CorrectionConfig) -> CorrectionReport {
    let idx = spec.voltage_indices();
    let mut corrected = ms.clone();
    let mut flags: Vec<(usize, EntryFlag)> = idx.iter().map(|&i| (i, EntryFlag::Kept)).collect();
    let mut substitutes = Vec::new();
    if idx.len() < 3 {
        return CorrectionReport {
            corrected,
            flags,
            substitutes,
            skipped: true,
        };
    }
    // Each entry is replaced at most once, which bounds the loop.
    for _ in 0..idx.len() {
        let values: Vec<f64> = idx.iter().map(|&i| corrected.values[i]).collect();
        let Some((pos, _)) = find_outlier(&values, cfg) else {
            break;
        };
        let rest: Vec<f64> = values.iter().enumerate().filter(|&(i, _)| i != pos).map(|(_, v)| *v).collect();
        let mean = rest.iter().sum::<f64>() / rest.len() as f64;
        corrected.values[idx[pos]] = mean;
        flags[pos].1 = EntryFlag::Replaced;
        substitutes.push((idx[pos], mean));
    }
    CorrectionReport {
        corrected,
        flags,
        substitutes,
        skipped: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voltages(values: &[f64]) -> (MeasurementSet, MeasurementSpec) {
        let mut spec = MeasurementSpec::new();
        for b in 0..values.len() {
            spec = spec.voltage(b);
        }
        let spec = spec.bus_power(1);
        let mut v = values.to_vec();
        v.extend([-120.0, -30.0]);
        let ms = MeasurementSet {
            assumed_sd_pct: spec.entries.iter().map(|e| e.sd_pct).collect(),
            values: v,
            switch_states: vec![],
            spec_hash: spec.hash(),
        };
        (ms, spec)
    }

    #[test]
    fn zero_reading_is_replaced() {
        let (ms, spec) = voltages(&[1.00, 1.01, 0.99, 0.00]);
        assert!((population_sd(&[1.00, 1.01, 0.99, 0.00]) - 0.433).abs() < 1e-3);
        assert!((population_sd(&[1.00, 1.01, 0.99]) - 0.0082).abs() < 1e-4);
        let r = correct_voltages(&ms, &spec, &CorrectionConfig::default());
        assert_eq!(r.substitutes.len(), 1);
        assert_eq!(r.substitutes[0].0, 3);
        assert!((r.corrected.values[3] - 1.00).abs() < 1e-12);
        assert_eq!(r.flags[3].1, EntryFlag::Replaced);
        assert_eq!(&r.corrected.values[4..], &ms.values[4..]);
    }

    #[test]
    fn high_reading_is_replaced() {
        let (ms, spec) = voltages(&[0.98, 0.99, 1.00, 1.47]);
        let r = correct_voltages(&ms, &spec, &CorrectionConfig::default());
        assert_eq!(r.substitutes.len(), 1);
        assert!((r.corrected.values[3] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn equal_readings_untouched() {
        let (ms, spec) = voltages(&[1.0, 1.0, 1.0]);
        let r = correct_voltages(&ms, &spec, &CorrectionConfig::default());
        assert_eq!(r.corrected, ms);
        assert!(r.flags.iter().all(|f| f.1 == EntryFlag::Kept));
    }

    #[test]
    fn ungated_halving_flags_feeder_spread() {
        let (ms, spec) = voltages(&[1.03, 0.99, 0.991, 0.989]);
        let ungated = CorrectionConfig {
            min_sd_pu: 0.0,
            ..Default::default()
        };
        assert_eq!(correct_voltages(&ms, &spec, &ungated).n_replaced(), 1);
        assert_eq!(correct_voltages(&ms, &spec, &CorrectionConfig::default()).n_replaced(), 0);
    }

    #[test]
    fn two_readings_skipped() {
        let (ms, spec) = voltages(&[1.0, 0.0]);
        let r = correct_voltages(&ms, &spec, &CorrectionConfig::default());
        assert!(r.skipped);
        assert_eq!(r.corrected, ms);
    }
}
