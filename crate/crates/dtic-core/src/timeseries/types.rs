//! Domain types: variables, irregular series, encounters, plausibility
//! ranges, and min-max scaler statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes covered by the model window `[0, 360)`.
pub const MODEL_WINDOW_MIN: f64 = 360.0;
/// End of the label window `[360, 420)` used for next-hour extrema.
pub const HORIZON_MIN: f64 = 420.0;

/// The six vital signs, in canonical order. Every fixed-size-6 array in the
/// crate is indexed by this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "SBP")]
    Sbp,
    #[serde(rename = "DBP")]
    Dbp,
    #[serde(rename = "HR")]
    Hr,
    #[serde(rename = "TEMP")]
    Temp,
    #[serde(rename = "SPO2")]
    Spo2,
    #[serde(rename = "RR")]
    Rr,
}

pub const N_VARS: usize = 6;

impl Variable {
    pub const ALL: [Variable; N_VARS] =
        [Variable::Sbp, Variable::Dbp, Variable::Hr, Variable::Temp, Variable::Spo2, Variable::Rr];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::Sbp => "SBP",
            Variable::Dbp => "DBP",
            Variable::Hr => "HR",
            Variable::Temp => "TEMP",
            Variable::Spo2 => "SPO2",
            Variable::Rr => "RR",
        }
    }

    pub fn parse(s: &str) -> Option<Variable> {
        Variable::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Whether the next-hour extremum of interest is the minimum (true) or
    /// the maximum (false): lows matter for pressures and oxygenation, highs
    /// for heart rate, temperature, and respiratory rate.
    pub fn extremum_is_min(self) -> bool {
        matches!(self, Variable::Sbp | Variable::Dbp | Variable::Spo2)
    }
}

/// One variable's observations, times in minutes from window start, strictly
/// increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrregularSeries {
    pub variable: Variable,
    pub points: Vec<(f64, f64)>,
}

impl IrregularSeries {
    pub fn empty(variable: Variable) -> Self {
        IrregularSeries { variable, points: Vec::new() }
    }

    pub fn new(variable: Variable, points: Vec<(f64, f64)>) -> Result<Self> {
        let s = IrregularSeries { variable, points };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for &(t, x) in &self.points {
            if !t.is_finite() || !x.is_finite() {
                return Err(Error::validation(format!(
                    "{}: non-finite observation ({t}, {x})",
                    self.variable.name()
                )));
            }
            if t < 0.0 {
                return Err(Error::validation(format!(
                    "{}: negative time {t}",
                    self.variable.name()
                )));
            }
            if t <= prev {
                return Err(Error::validation(format!(
                    "{}: times not strictly increasing at {t}",
                    self.variable.name()
                )));
            }
            prev = t;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|&(t, _)| t)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|&(_, x)| x)
    }
}

/// One record: six model-window series over `[0, 360)` plus six label-window
/// series over `[360, 420)` (label windows may be empty). `is_fake` and
/// `planted_label` exist only in memory; neither is persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    pub id: String,
    pub series: [IrregularSeries; N_VARS],
    pub seventh_hour: [IrregularSeries; N_VARS],
    #[serde(skip)]
    pub is_fake: bool,
    #[serde(skip)]
    pub planted_label: Option<usize>,
}

impl Encounter {
    pub fn empty(id: impl Into<String>) -> Self {
        Encounter {
            id: id.into(),
            series: Variable::ALL.map(IrregularSeries::empty),
            seventh_hour: Variable::ALL.map(IrregularSeries::empty),
            is_fake: false,
            planted_label: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("encounter id is empty"));
        }
        for (i, s) in self.series.iter().enumerate() {
            if s.variable != Variable::ALL[i] {
                return Err(Error::validation(format!(
                    "encounter {}: series {i} is {}, expected {}",
                    self.id,
                    s.variable.name(),
                    Variable::ALL[i].name()
                )));
            }
            s.validate().map_err(|e| Error::validation(format!("encounter {}: {e}", self.id)))?;
            if let Some(t) = s.times().find(|&t| t >= MODEL_WINDOW_MIN) {
                return Err(Error::validation(format!(
                    "encounter {}: {} observation at {t} outside the model window",
                    self.id,
                    s.variable.name()
                )));
            }
        }
        for (i, s) in self.seventh_hour.iter().enumerate() {
            if s.variable != Variable::ALL[i] {
                return Err(Error::validation(format!(
                    "encounter {}: label series {i} is {}, expected {}",
                    self.id,
                    s.variable.name(),
                    Variable::ALL[i].name()
                )));
            }
            s.validate().map_err(|e| Error::validation(format!("encounter {}: {e}", self.id)))?;
            if let Some(t) = s.times().find(|&t| !(MODEL_WINDOW_MIN..HORIZON_MIN).contains(&t)) {
                return Err(Error::validation(format!(
                    "encounter {}: {} label observation at {t} outside [360, 420)",
                    self.id,
                    s.variable.name()
                )));
            }
        }
        Ok(())
    }

    pub fn series_for(&self, v: Variable) -> &IrregularSeries {
        &self.series[v.index()]
    }

    /// Count of model-window series with no observations.
    pub fn empty_series_count(&self) -> usize {
        self.series.iter().filter(|s| s.is_empty()).count()
    }
}

/// Plausibility interval and population statistics for one variable.
/// `lo_open`/`hi_open` select strict vs inclusive comparison per endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
    pub impute_mean: f64,
    pub expected_freq_per_hour: f64,
}

impl RangeSpec {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        let below = if self.hi_open { v < self.hi } else { v <= self.hi };
        v.is_finite() && above && below
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::validation(format!(
                "{name}: invalid range [{}, {}]",
                self.lo, self.hi
            )));
        }
        if !self.contains(self.impute_mean) {
            return Err(Error::validation(format!(
                "{name}: impute mean {} outside its own range",
                self.impute_mean
            )));
        }
        if !(self.expected_freq_per_hour > 0.0) {
            return Err(Error::validation(format!(
                "{name}: expected frequency must be positive, got {}",
                self.expected_freq_per_hour
            )));
        }
        Ok(())
    }
}

/// Per-variable plausibility ranges. Field order matches the canonical
/// variable order so serialized output is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableRanges {
    #[serde(rename = "SBP")]
    pub sbp: RangeSpec,
    #[serde(rename = "DBP")]
    pub dbp: RangeSpec,
    #[serde(rename = "HR")]
    pub hr: RangeSpec,
    #[serde(rename = "TEMP")]
    pub temp: RangeSpec,
    #[serde(rename = "SPO2")]
    pub spo2: RangeSpec,
    #[serde(rename = "RR")]
    pub rr: RangeSpec,
}

pub const DEFAULT_RANGES_JSON: &str = include_str!("../../data/default_ranges.json");

impl VariableRanges {
    pub fn get(&self, v: Variable) -> &RangeSpec {
        match v {
            Variable::Sbp => &self.sbp,
            Variable::Dbp => &self.dbp,
            Variable::Hr => &self.hr,
            Variable::Temp => &self.temp,
            Variable::Spo2 => &self.spo2,
            Variable::Rr => &self.rr,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ranges: VariableRanges = serde_json::from_str(json)?;
        ranges.validate()?;
        Ok(ranges)
    }

    pub fn validate(&self) -> Result<()> {
        for v in Variable::ALL {
            self.get(v).validate(v.name())?;
        }
        Ok(())
    }
}

impl Default for VariableRanges {
    /// Shipped defaults; see `data/default_ranges.json`.
    fn default() -> Self {
        Self::from_json(DEFAULT_RANGES_JSON).expect("shipped ranges parse")
    }
}

/// Cohort min-max statistics per variable, fitted on cleaned observations
/// before imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub min: [f64; N_VARS],
    pub max: [f64; N_VARS],
}

impl ScalerStats {
    /// Unit-interval stats: scaling with these is the identity on [0, 1].
    pub fn identity() -> Self {
        ScalerStats { min: [0.0; N_VARS], max: [1.0; N_VARS] }
    }

    pub fn is_degenerate(&self, v: Variable) -> bool {
        self.min[v.index()] >= self.max[v.index()]
    }

    pub fn degenerate_vars(&self) -> Vec<Variable> {
        Variable::ALL.into_iter().filter(|&v| self.is_degenerate(v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for v in Variable::ALL {
            let (lo, hi) = (self.min[v.index()], self.max[v.index()]);
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::validation(format!(
                    "scaler stats for {}: min {lo}, max {hi}",
                    v.name()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_and_indices() {
        let names: Vec<&str> = Variable::ALL.iter().map(|v| v.name()).collect();
        assert_eq!(names, ["SBP", "DBP", "HR", "TEMP", "SPO2", "RR"]);
        for (i, v) in Variable::ALL.into_iter().enumerate() {
            assert_eq!(v.index(), i);
            assert_eq!(Variable::parse(v.name()), Some(v));
        }
        assert_eq!(Variable::parse("sbp"), None);
    }

    #[test]
    fn default_ranges_match_shipped_constants() {
        let r = VariableRanges::default();
        // (lo, hi, lo_open, hi_open, mean, freq), canonical order.
        let want = [
            (20.0, 300.0, true, true, 119.1, 2.0),
            (5.0, 225.0, true, true, 66.1, 2.0),
            (0.0, 300.0, true, false, 76.8, 2.0),
            (24.0, 45.0, true, true, 36.7, 1.0),
            (1.0, 100.0, true, false, 97.8, 2.0),
            (0.0, 60.0, true, false, 12.7, 2.0),
        ];
        for (v, w) in Variable::ALL.into_iter().zip(want) {
            let spec = r.get(v);
            assert_eq!(
                (spec.lo, spec.hi, spec.lo_open, spec.hi_open, spec.impute_mean, spec.expected_freq_per_hour),
                w,
                "{}",
                v.name()
            );
        }
    }

    #[test]
    fn endpoint_semantics() {
        let r = VariableRanges::default();
        assert!(!r.get(Variable::Hr).contains(0.0)); // lo open
        assert!(r.get(Variable::Hr).contains(300.0)); // hi closed
        assert!(!r.get(Variable::Sbp).contains(300.0)); // hi open
        assert!(r.get(Variable::Spo2).contains(100.0)); // hi closed
        assert!(!r.get(Variable::Spo2).contains(1.0)); // lo open
        assert!(!r.get(Variable::Temp).contains(45.0)); // hi open
        assert!(r.get(Variable::Rr).contains(60.0)); // hi closed
        assert!(!r.get(Variable::Rr).contains(f64::NAN));
    }

    #[test]
    fn ranges_json_round_trip() {
        let r = VariableRanges::default();
        let s = serde_json::to_string(&r).unwrap();
        let r2 = VariableRanges::from_json(&s).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn unknown_range_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_RANGES_JSON).unwrap();
        v.as_object_mut().unwrap().insert("MAP".into(), serde_json::json!({}));
        assert!(VariableRanges::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn series_validation() {
        assert!(IrregularSeries::new(Variable::Hr, vec![(0.0, 70.0), (5.0, 72.0)]).is_ok());
        assert!(IrregularSeries::new(Variable::Hr, vec![(5.0, 70.0), (5.0, 72.0)]).is_err());
        assert!(IrregularSeries::new(Variable::Hr, vec![(-1.0, 70.0)]).is_err());
        assert!(IrregularSeries::new(Variable::Hr, vec![(0.0, f64::NAN)]).is_err());
    }

    #[test]
    fn encounter_window_validation() {
        let mut e = Encounter::empty("a");
        e.series[0].points = vec![(361.0, 120.0)];
        assert!(e.validate().is_err());
        let mut e = Encounter::empty("a");
        e.seventh_hour[0].points = vec![(10.0, 120.0)];
        assert!(e.validate().is_err());
        let mut e = Encounter::empty("a");
        e.series[0].points = vec![(10.0, 120.0)];
        e.seventh_hour[0].points = vec![(400.0, 118.0)];
        assert!(e.validate().is_ok());
    }
}
