//! Five-minute binned summaries per phenotype, for trajectory plots.
//!
//! Within each encounter, observations falling in a bin are averaged first;
//! the across-encounter mean and normal-approximation 95% interval are then
//! computed over those per-encounter bin means. Bins nobody observed are
//! omitted.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::timeseries::types::{Encounter, Variable, MODEL_WINDOW_MIN};

pub const BIN_MIN: f64 = 5.0;
pub const N_BINS: usize = (MODEL_WINDOW_MIN / BIN_MIN) as usize;

const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct BinStat {
    pub phenotype: usize,
    pub variable: Variable,
    pub bin_start_min: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Number of encounters contributing a bin mean.
    pub n: usize,
}

/// `labels` maps encounter id to phenotype; every encounter in `cohort` must
/// be present. Output is ordered by (phenotype, variable, bin).
pub fn resample_5min(
    cohort: &[Encounter],
    labels: &BTreeMap<String, usize>,
) -> Result<Vec<BinStat>> {
    // (phenotype, var, bin) -> per-encounter bin means
    let mut acc: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
    for enc in cohort {
        let &phenotype = labels
            .get(&enc.id)
            .ok_or_else(|| Error::validation(format!("no phenotype label for encounter {}", enc.id)))?;
        for v in Variable::ALL {
            let mut sums = vec![(0.0f64, 0usize); N_BINS];
            for &(t, x) in &enc.series[v.index()].points {
                let bin = ((t / BIN_MIN) as usize).min(N_BINS - 1);
                sums[bin].0 += x;
                sums[bin].1 += 1;
            }
            for (bin, &(sum, count)) in sums.iter().enumerate() {
                if count > 0 {
                    acc.entry((phenotype, v.index(), bin)).or_default().push(sum / count as f64);
                }
            }
        }
    }

    let mut out = Vec::with_capacity(acc.len());
    for ((phenotype, var_idx, bin), means) in acc {
        let n = means.len();
        let mean = means.iter().sum::<f64>() / n as f64;
        let half = if n > 1 {
            let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z_95 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        out.push(BinStat {
            phenotype,
            variable: Variable::ALL[var_idx],
            bin_start_min: bin as f64 * BIN_MIN,
            mean,
            ci_lo: mean - half,
            ci_hi: mean + half,
            n,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(id: &str, hr: &[(f64, f64)]) -> Encounter {
        let mut e = Encounter::empty(id);
        e.series[Variable::Hr.index()].points = hr.to_vec();
        e
    }

    #[test]
    fn bin_means_then_cohort_stats() {
        let cohort = vec![
            enc("a", &[(0.0, 10.0), (4.9, 20.0), (5.0, 50.0)]),
            enc("b", &[(1.0, 25.0)]),
        ];
        let labels: BTreeMap<String, usize> =
            [("a".to_string(), 0), ("b".to_string(), 0)].into_iter().collect();
        let stats = resample_5min(&cohort, &labels).unwrap();
        assert_eq!(stats.len(), 2);

        // Bin [0, 5): encounter a averages to 15, encounter b to 25.
        let b0 = &stats[0];
        assert_eq!(b0.bin_start_min, 0.0);
        assert_eq!(b0.n, 2);
        assert!((b0.mean - 20.0).abs() < 1e-12);
        // sd = sqrt(((15-20)^2 + (25-20)^2) / 1) = 7.0710678...; half-width
        // 1.96 * sd / sqrt(2) = 9.8.
        assert!((b0.ci_hi - b0.mean - 9.8).abs() < 1e-10, "half width {}", b0.ci_hi - b0.mean);

        // Bin [5, 10): only encounter a, CI collapses to the mean.
        let b1 = &stats[1];
        assert_eq!(b1.bin_start_min, 5.0);
        assert_eq!(b1.n, 1);
        assert_eq!(b1.mean, 50.0);
        assert_eq!((b1.ci_lo, b1.ci_hi), (50.0, 50.0));
    }

    #[test]
    fn missing_label_is_an_error() {
        let cohort = vec![enc("a", &[(0.0, 10.0)])];
        let labels = BTreeMap::new();
        assert!(resample_5min(&cohort, &labels).is_err());
    }

    #[test]
    fn phenotypes_are_separated_and_ordered() {
        let cohort = vec![
            enc("a", &[(0.0, 10.0)]),
            enc("b", &[(0.0, 30.0)]),
            enc("c", &[(359.9, 99.0)]),
        ];
        let labels: BTreeMap<String, usize> =
            [("a".into(), 1), ("b".into(), 0), ("c".into(), 0)].into_iter().collect();
        let stats = resample_5min(&cohort, &labels).unwrap();
        assert_eq!(stats.len(), 3);
        assert_eq!((stats[0].phenotype, stats[0].mean), (0, 30.0));
        // last model-window bin start (355) catches t = 359.9
        assert_eq!((stats[1].phenotype, stats[1].bin_start_min), (0, 355.0));
        assert_eq!((stats[2].phenotype, stats[2].mean), (1, 10.0));
    }
}
