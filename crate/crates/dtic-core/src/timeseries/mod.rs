pub mod csvio;
pub mod prep;
pub mod resample;
pub mod synth;
pub mod types;

pub use csvio::{parse_cohort_csv, write_cohort_csv, ParseReport, DEFAULT_MAX_BAD_ROW_FRACTION};
pub use prep::{
    clean_encounter, extrema_labels, fit_scaler, impute_empty_series, inverse_scale_value,
    is_eligible, make_fake, scale_encounter, scale_value, CleanCounts,
};
pub use resample::{resample_5min, BinStat, N_BINS};
pub use synth::{generate_synthetic_cohort, ArchetypeSpec, SynthSpec, TrajectorySpec};
pub use types::{
    Encounter, IrregularSeries, RangeSpec, ScalerStats, Variable, VariableRanges,
    DEFAULT_RANGES_JSON, HORIZON_MIN, MODEL_WINDOW_MIN, N_VARS,
};
