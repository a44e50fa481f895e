//! Small fixtures shared across module tests.

use crate::config::RunConfig;
use crate::model::ModelParams;
use crate::pipeline::PreparedCohort;
use crate::timeseries::{Encounter, IrregularSeries, Variable};

/// An encounter with three observations per model series and two per
/// seventh-hour series, already in scaled units.
pub fn make_encounter(id: &str, shift: f64) -> Encounter {
    let mut enc = Encounter::empty(id);
    for v in Variable::ALL {
        let d = v.index();
        enc.series[d] = IrregularSeries {
            variable: v,
            points: vec![
                (10.0 + 3.0 * d as f64, 0.3 + shift),
                (150.0 + 5.0 * d as f64, 0.5 + shift * 0.5),
                (320.0, 0.4),
            ],
        };
        enc.seventh_hour[d] = IrregularSeries {
            variable: v,
            points: vec![(370.0, 0.45 + shift), (400.0, 0.55)],
        };
    }
    enc
}

pub fn small_config(hidden: usize, grid_len: usize) -> RunConfig {
    RunConfig { hidden, grid_len, ..RunConfig::default() }
}

pub fn small_params(hidden: usize, grid_len: usize, seed: u64) -> ModelParams {
    ModelParams::init(&small_config(hidden, grid_len), seed).unwrap()
}

pub fn small_cohort(n: usize, grid_len: usize) -> PreparedCohort {
    let encs: Vec<Encounter> =
        (0..n).map(|i| make_encounter(&format!("e{i}"), 0.05 * i as f64)).collect();
    PreparedCohort::prepare(encs, grid_len).unwrap()
}
