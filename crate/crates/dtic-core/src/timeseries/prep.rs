//! Preprocessing: plausibility cleaning, eligibility, imputation, min-max
//! scaling, synthetic-negative construction, and next-hour extrema labels.
//!
//! Pipeline order matters and is enforced by the callers: clean, then drop
//! ineligible encounters, then fit the scaler on the surviving observations,
//! then impute empty series with population means (native units), then scale
//! both windows into [0, 1].

use rand::Rng;

use crate::timeseries::types::{Encounter, ScalerStats, Variable, VariableRanges, N_VARS};

/// Observations dropped per variable by plausibility cleaning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanCounts {
    pub dropped: [u64; N_VARS],
}

impl CleanCounts {
    pub fn total(&self) -> u64 {
        self.dropped.iter().sum()
    }

    pub fn merge(&mut self, other: &CleanCounts) {
        for (a, b) in self.dropped.iter_mut().zip(other.dropped) {
            *a += b;
        }
    }
}

/// Drop physiologically implausible observations from both windows.
pub fn clean_encounter(enc: &mut Encounter, ranges: &VariableRanges) -> CleanCounts {
    let mut counts = CleanCounts::default();
    for v in Variable::ALL {
        let spec = ranges.get(v);
        for window in [&mut enc.series, &mut enc.seventh_hour] {
            let pts = &mut window[v.index()].points;
            let before = pts.len();
            pts.retain(|&(_, x)| spec.contains(x));
            counts.dropped[v.index()] += (before - pts.len()) as u64;
        }
    }
    counts
}

/// An encounter stays in the cohort unless two or more of its model-window
/// series are empty after cleaning.
pub fn is_eligible(enc: &Encounter) -> bool {
    enc.empty_series_count() < 2
}

/// Replace each empty model-window series with a single population-mean
/// observation at t = 0 (native units). Returns how many series were imputed.
pub fn impute_empty_series(enc: &mut Encounter, ranges: &VariableRanges) -> usize {
    let mut imputed = 0;
    for v in Variable::ALL {
        let series = &mut enc.series[v.index()];
        if series.is_empty() {
            series.points.push((0.0, ranges.get(v).impute_mean));
            imputed += 1;
        }
    }
    imputed
}

/// Min-max statistics over the model-window observations of the cohort.
/// Call after cleaning and before imputation so the statistics describe real
/// measurements only. A variable with no observations anywhere gets the
/// degenerate (0, 0) pair; scaling then maps it to 0 everywhere.
pub fn fit_scaler(cohort: &[Encounter]) -> ScalerStats {
    let mut min = [f64::INFINITY; N_VARS];
    let mut max = [f64::NEG_INFINITY; N_VARS];
    for enc in cohort {
        for v in Variable::ALL {
            for x in enc.series[v.index()].values() {
                let i = v.index();
                min[i] = min[i].min(x);
                max[i] = max[i].max(x);
            }
        }
    }
    for i in 0..N_VARS {
        if min[i] > max[i] {
            min[i] = 0.0;
            max[i] = 0.0;
        }
    }
    ScalerStats { min, max }
}

/// `(x - min) / (max - min)` clipped to [0, 1]; degenerate variables map to 0.
pub fn scale_value(stats: &ScalerStats, v: Variable, x: f64) -> f64 {
    let (lo, hi) = (stats.min[v.index()], stats.max[v.index()]);
    if lo >= hi {
        return 0.0;
    }
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

pub fn inverse_scale_value(stats: &ScalerStats, v: Variable, x: f64) -> f64 {
    let (lo, hi) = (stats.min[v.index()], stats.max[v.index()]);
    lo + x * (hi - lo)
}

/// Scale both windows of an encounter in place.
pub fn scale_encounter(enc: &mut Encounter, stats: &ScalerStats) {
    for v in Variable::ALL {
        for window in [&mut enc.series, &mut enc.seventh_hour] {
            for p in &mut window[v.index()].points {
                p.1 = scale_value(stats, v, p.1);
            }
        }
    }
}

/// Synthetic negative for the discriminator: same id and timestamps, but in
/// each series exactly `floor(len * fraction)` distinct positions get their
/// (already scaled) value replaced by a uniform draw on the unit interval.
/// Fakes carry no label window and no planted label.
pub fn make_fake(enc: &Encounter, fraction: f64, rng: &mut impl Rng) -> Encounter {
    debug_assert!((0.0..=1.0).contains(&fraction));
    let mut fake = enc.clone();
    fake.is_fake = true;
    fake.planted_label = None;
    for s in &mut fake.seventh_hour {
        s.points.clear();
    }
    for v in Variable::ALL {
        let pts = &mut fake.series[v.index()].points;
        let n = pts.len();
        let m = ((n as f64) * fraction).floor() as usize;
        if m == 0 {
            continue;
        }
        // Partial Fisher-Yates: first m entries of a shuffled index vector.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        let mut chosen = idx[..m].to_vec();
        chosen.sort_unstable();
        for i in chosen {
            pts[i].1 = rng.gen::<f64>();
        }
    }
    fake
}

/// Next-hour extrema in the label window, in the encounter's current units:
/// minima for SBP, DBP, and SPO2; maxima for HR, TEMP, and RR. `None` where
/// the label window holds no observations of that variable.
pub fn extrema_labels(enc: &Encounter) -> [Option<f64>; N_VARS] {
    Variable::ALL.map(|v| {
        let series = &enc.seventh_hour[v.index()];
        if series.is_empty() {
            return None;
        }
        let fold = if v.extremum_is_min() { f64::min } else { f64::max };
        Some(series.values().fold(if v.extremum_is_min() { f64::INFINITY } else { f64::NEG_INFINITY }, fold))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn enc_with(points: &[(Variable, f64, f64)]) -> Encounter {
        let mut e = Encounter::empty("t");
        for &(v, t, x) in points {
            if t < 360.0 {
                e.series[v.index()].points.push((t, x));
            } else {
                e.seventh_hour[v.index()].points.push((t, x));
            }
        }
        e
    }

    #[test]
    fn clean_respects_endpoint_openness() {
        let ranges = VariableRanges::default();
        let mut e = enc_with(&[
            (Variable::Hr, 0.0, 300.0),   // kept: hi closed
            (Variable::Hr, 1.0, 0.0),     // dropped: lo open
            (Variable::Sbp, 0.0, 300.0),  // dropped: hi open
            (Variable::Sbp, 1.0, 20.0),   // dropped: lo open
            (Variable::Sbp, 2.0, 119.1),  // kept
            (Variable::Spo2, 0.0, 100.0), // kept: hi closed
            (Variable::Temp, 0.0, 45.0),  // dropped: hi open
            (Variable::Rr, 0.0, 60.0),    // kept: hi closed
            (Variable::Rr, 400.0, 61.0),  // dropped from the label window too
        ]);
        let counts = clean_encounter(&mut e, &ranges);
        assert_eq!(e.series[Variable::Hr.index()].points, vec![(0.0, 300.0)]);
        assert_eq!(e.series[Variable::Sbp.index()].points, vec![(2.0, 119.1)]);
        assert_eq!(e.series[Variable::Spo2.index()].points, vec![(0.0, 100.0)]);
        assert!(e.series[Variable::Temp.index()].is_empty());
        assert_eq!(e.series[Variable::Rr.index()].points, vec![(0.0, 60.0)]);
        assert!(e.seventh_hour[Variable::Rr.index()].is_empty());
        assert_eq!(counts.total(), 5);
        assert_eq!(counts.dropped[Variable::Sbp.index()], 2);
    }

    #[test]
    fn eligibility_threshold_is_two_empty_series() {
        let mut e = enc_with(&[(Variable::Sbp, 0.0, 120.0)]);
        // five empty
        assert!(!is_eligible(&e));
        for v in [Variable::Dbp, Variable::Hr, Variable::Temp, Variable::Spo2] {
            e.series[v.index()].points.push((0.0, 30.0));
        }
        // one empty (RR)
        assert!(is_eligible(&e));
        e.series[Variable::Dbp.index()].points.clear();
        // two empty
        assert!(!is_eligible(&e));
    }

    #[test]
    fn imputation_inserts_population_mean_at_zero() {
        let ranges = VariableRanges::default();
        let mut e = enc_with(&[(Variable::Sbp, 10.0, 120.0)]);
        let n = impute_empty_series(&mut e, &ranges);
        assert_eq!(n, 5);
        assert_eq!(e.series[Variable::Sbp.index()].points, vec![(10.0, 120.0)]);
        assert_eq!(e.series[Variable::Dbp.index()].points, vec![(0.0, 66.1)]);
        assert_eq!(e.series[Variable::Hr.index()].points, vec![(0.0, 76.8)]);
        assert_eq!(e.series[Variable::Temp.index()].points, vec![(0.0, 36.7)]);
        assert_eq!(e.series[Variable::Spo2.index()].points, vec![(0.0, 97.8)]);
        assert_eq!(e.series[Variable::Rr.index()].points, vec![(0.0, 12.7)]);
    }

    #[test]
    fn scaler_fit_and_transform() {
        let a = enc_with(&[(Variable::Hr, 0.0, 60.0), (Variable::Hr, 5.0, 100.0)]);
        let b = enc_with(&[(Variable::Hr, 0.0, 80.0)]);
        let stats = fit_scaler(&[a, b]);
        assert_eq!(stats.min[Variable::Hr.index()], 60.0);
        assert_eq!(stats.max[Variable::Hr.index()], 100.0);
        assert_eq!(scale_value(&stats, Variable::Hr, 80.0), 0.5);
        assert_eq!(scale_value(&stats, Variable::Hr, 60.0), 0.0);
        assert_eq!(scale_value(&stats, Variable::Hr, 100.0), 1.0);
        // clipping outside the fitted range
        assert_eq!(scale_value(&stats, Variable::Hr, 50.0), 0.0);
        assert_eq!(scale_value(&stats, Variable::Hr, 120.0), 1.0);
        // unseen variables are degenerate and map to zero
        assert!(stats.is_degenerate(Variable::Sbp));
        assert_eq!(scale_value(&stats, Variable::Sbp, 119.1), 0.0);
        // inverse on the non-degenerate variable
        let x = scale_value(&stats, Variable::Hr, 73.0);
        assert!((inverse_scale_value(&stats, Variable::Hr, x) - 73.0).abs() < 1e-12);
    }

    #[test]
    fn scale_encounter_touches_both_windows() {
        let mut e = enc_with(&[(Variable::Hr, 0.0, 60.0), (Variable::Hr, 5.0, 100.0), (Variable::Hr, 361.0, 90.0)]);
        let stats = fit_scaler(std::slice::from_ref(&e));
        scale_encounter(&mut e, &stats);
        assert_eq!(e.series[Variable::Hr.index()].points, vec![(0.0, 0.0), (5.0, 1.0)]);
        assert_eq!(e.seventh_hour[Variable::Hr.index()].points, vec![(361.0, 0.75)]);
    }

    #[test]
    fn fake_replaces_exactly_half_and_keeps_times() {
        let mut e = Encounter::empty("t");
        for v in Variable::ALL {
            e.series[v.index()].points = (0..9).map(|i| (i as f64, 0.5)).collect();
        }
        e.seventh_hour[0].points = vec![(400.0, 0.5)];
        let mut rng = stream(11, "fake");
        let fake = make_fake(&e, 0.5, &mut rng);
        assert!(fake.is_fake);
        assert!(fake.seventh_hour.iter().all(|s| s.is_empty()));
        for v in Variable::ALL {
            let orig = &e.series[v.index()].points;
            let got = &fake.series[v.index()].points;
            assert_eq!(got.len(), orig.len());
            let times_unchanged = orig.iter().zip(got).all(|(a, b)| a.0 == b.0);
            assert!(times_unchanged);
            let replaced = orig.iter().zip(got).filter(|(a, b)| a.1 != b.1).count();
            assert_eq!(replaced, 4, "floor(9/2) replacements for {}", v.name());
            assert!(got.iter().all(|&(_, x)| (0.0..=1.0).contains(&x)));
        }
        // determinism: same stream, same fake
        let fake2 = make_fake(&e, 0.5, &mut stream(11, "fake"));
        assert_eq!(fake, fake2);
    }

    #[test]
    fn fake_of_singleton_series_is_unchanged() {
        let mut e = Encounter::empty("t");
        e.series[0].points = vec![(0.0, 0.3)];
        let fake = make_fake(&e, 0.5, &mut stream(1, "fake"));
        assert_eq!(fake.series[0].points, vec![(0.0, 0.3)]);
    }

    #[test]
    fn extrema_directions() {
        let e = enc_with(&[
            (Variable::Sbp, 365.0, 110.0),
            (Variable::Sbp, 370.0, 95.0),
            (Variable::Sbp, 380.0, 105.0),
            (Variable::Hr, 365.0, 80.0),
            (Variable::Hr, 400.0, 97.0),
            (Variable::Spo2, 361.0, 93.0),
            (Variable::Spo2, 362.0, 96.0),
            (Variable::Temp, 390.0, 38.2),
            (Variable::Rr, 395.0, 22.0),
            (Variable::Rr, 396.0, 18.0),
        ]);
        let labels = extrema_labels(&e);
        assert_eq!(labels[Variable::Sbp.index()], Some(95.0));
        assert_eq!(labels[Variable::Hr.index()], Some(97.0));
        assert_eq!(labels[Variable::Spo2.index()], Some(93.0));
        assert_eq!(labels[Variable::Temp.index()], Some(38.2));
        assert_eq!(labels[Variable::Rr.index()], Some(22.0));
        assert_eq!(labels[Variable::Dbp.index()], None);
    }

    #[test]
    fn degenerate_scaler_var_is_reported() {
        let stats = ScalerStats { min: [0.0; 6], max: [0.0, 1.0, 1.0, 1.0, 1.0, 1.0] };
        assert_eq!(stats.degenerate_vars(), vec![Variable::Sbp]);
    }
}
