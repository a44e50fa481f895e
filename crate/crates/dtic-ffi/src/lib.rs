//! C ABI over the dtic pipeline: load a trained model file, inspect it, and
//! assign encounters to phenotypes. Handles are opaque pointers; every call
//! that can fail returns a status code and leaves a message retrievable with
//! `dtic_last_error` on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dtic_core::model::{ModelFile, ModelParams};
use dtic_core::pipeline::{assign_cohort, embed_cohort, PreparedCohort};
use dtic_core::timeseries::{
    clean_encounter, impute_empty_series, is_eligible, scale_encounter, Encounter, Variable,
    HORIZON_MIN, MODEL_WINDOW_MIN, N_VARS,
};
use dtic_core::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DticStatus {
    /// Success.
    DticOk = 0,
    /// A required pointer argument was null.
    DticNullArgument = 1,
    /// The input was rejected (bad path, malformed model, invalid series,
    /// ineligible encounter, model without centroids).
    DticInvalidInput = 2,
    /// The computation produced a non-finite value.
    DticNumeric = 3,
    /// A panic was caught at the boundary; this is a bug, not bad input.
    DticInternal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_for(err: &Error) -> DticStatus {
    match err {
        Error::Numeric(_) => DticStatus::DticNumeric,
        _ => DticStatus::DticInvalidInput,
    }
}

/// Loaded model plus the live parameter store it deserializes into.
pub struct DticModel {
    file: ModelFile,
    params: ModelParams,
}

/// Guard an FFI body against panics; a panic across `extern "C"` is UB.
fn guarded(f: impl FnOnce() -> DticStatus) -> DticStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            DticStatus::DticInternal
        }
    }
}

/// Returns the last error message for this thread, or null if none has been
/// recorded. The pointer stays valid until the next failing call on the same
/// thread; do not free it.
#[no_mangle]
pub extern "C" fn dtic_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dtic_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Loads a model JSON file.
///
/// On success writes a handle to `out` and returns `DticOk`; the handle must
/// be released with [`dtic_model_free`].
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to a writable
/// pointer slot; both must be non-null.
#[no_mangle]
pub unsafe extern "C" fn dtic_model_load(
    path: *const c_char,
    out: *mut *mut DticModel,
) -> DticStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("path and out must be non-null");
            return DticStatus::DticNullArgument;
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("path is not valid UTF-8");
                return DticStatus::DticInvalidInput;
            }
        };
        let file = match ModelFile::load(Path::new(path)) {
            Ok(f) => f,
            Err(e) => {
                set_error(&e.to_string());
                return status_for(&e);
            }
        };
        let params = match file.build_params() {
            Ok(p) => p,
            Err(e) => {
                set_error(&e.to_string());
                return status_for(&e);
            }
        };
        unsafe { *out = Box::into_raw(Box::new(DticModel { file, params })) };
        DticStatus::DticOk
    })
}

/// Releases a handle returned by [`dtic_model_load`]. Null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer obtained from [`dtic_model_load`] that
/// has not been freed already.
#[no_mangle]
pub unsafe extern "C" fn dtic_model_free(model: *mut DticModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of phenotypes the model assigns to, or 0 if the model has not been
/// clustered.
///
/// # Safety
/// `model` must be a live handle from [`dtic_model_load`].
#[no_mangle]
pub unsafe extern "C" fn dtic_model_num_phenotypes(model: *const DticModel) -> usize {
    if model.is_null() {
        return 0;
    }
    let model = unsafe { &*model };
    model.file.centroids.as_ref().map_or(0, |c| c.rows())
}

/// Width of the learned embedding space.
///
/// # Safety
/// `model` must be a live handle from [`dtic_model_load`].
#[no_mangle]
pub unsafe extern "C" fn dtic_model_embedding_dim(model: *const DticModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.file.config.hidden
}

fn build_encounter(times: &[f64], values: &[f64], lens: &[usize; N_VARS]) -> Result<Encounter, String> {
    let mut enc = Encounter::empty("ffi");
    let mut offset = 0;
    for v in Variable::ALL {
        let n = lens[v.index()];
        let t = &times[offset..offset + n];
        let x = &values[offset..offset + n];
        offset += n;
        let mut prev = f64::NEG_INFINITY;
        for (&ti, &xi) in t.iter().zip(x) {
            if !ti.is_finite() || !xi.is_finite() {
                return Err(format!("{}: non-finite observation", v.name()));
            }
            if !(0.0..HORIZON_MIN).contains(&ti) {
                return Err(format!("{}: time {ti} outside [0, {HORIZON_MIN})", v.name()));
            }
            if ti <= prev {
                return Err(format!("{}: times must be strictly increasing", v.name()));
            }
            prev = ti;
            if ti < MODEL_WINDOW_MIN {
                enc.series[v.index()].points.push((ti, xi));
            } else {
                enc.seventh_hour[v.index()].points.push((ti, xi));
            }
        }
    }
    Ok(enc)
}

/// Assigns one encounter to its nearest phenotype centroid.
///
/// `times` and `values` hold the observations of all six variables
/// concatenated in canonical order (SBP, DBP, HR, TEMP, SPO2, RR); `lens`
/// gives the six per-variable observation counts. Times are minutes from
/// window start in `[0, 420)` and must be strictly increasing within each
/// variable; values are native units. The encounter is cleaned, imputed, and
/// scaled exactly as held-out data in the CLI. On success writes the
/// phenotype index and the embedding-space distance to its centroid.
///
/// # Safety
/// `model` must be a live handle; `times` and `values` must hold
/// `lens[0] + .. + lens[5]` readable elements; `lens` must hold 6 readable
/// elements; `phenotype` and `distance` must be writable and non-null.
#[no_mangle]
pub unsafe extern "C" fn dtic_assign(
    model: *const DticModel,
    times: *const f64,
    values: *const f64,
    lens: *const usize,
    phenotype: *mut u32,
    distance: *mut f64,
) -> DticStatus {
    guarded(|| {
        if model.is_null()
            || times.is_null()
            || values.is_null()
            || lens.is_null()
            || phenotype.is_null()
            || distance.is_null()
        {
            set_error("all arguments must be non-null");
            return DticStatus::DticNullArgument;
        }
        let model = unsafe { &*model };
        let centroids = match &model.file.centroids {
            Some(c) => c,
            None => {
                set_error("model has no centroids; run the cluster stage first");
                return DticStatus::DticInvalidInput;
            }
        };
        let lens: &[usize; N_VARS] = unsafe { &*lens.cast() };
        let total: usize = lens.iter().sum();
        let times = unsafe { std::slice::from_raw_parts(times, total) };
        let values = unsafe { std::slice::from_raw_parts(values, total) };
        let mut enc = match build_encounter(times, values, lens) {
            Ok(e) => e,
            Err(msg) => {
                set_error(&msg);
                return DticStatus::DticInvalidInput;
            }
        };
        clean_encounter(&mut enc, &model.file.ranges);
        if !is_eligible(&enc) {
            set_error("encounter has fewer than five non-empty series after cleaning");
            return DticStatus::DticInvalidInput;
        }
        impute_empty_series(&mut enc, &model.file.ranges);
        scale_encounter(&mut enc, &model.file.scaler);
        let result = (|| {
            let pc = PreparedCohort::prepare(vec![enc], model.file.config.grid_len)?;
            let emb = embed_cohort(&model.params, &pc, 1)?;
            let assigned = assign_cohort(&emb, centroids)?;
            Ok::<(usize, f64), Error>(assigned[0])
        })();
        match result {
            Ok((label, dist)) => {
                unsafe {
                    *phenotype = label as u32;
                    *distance = dist;
                }
                DticStatus::DticOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dtic_core::autodiff::Array;
    use dtic_core::config::RunConfig;
    use dtic_core::timeseries::{ScalerStats, VariableRanges};

    fn tiny_clustered_model(dir: &Path) -> std::path::PathBuf {
        let mut cfg = RunConfig::default();
        cfg.hidden = 4;
        cfg.grid_len = 8;
        let mut mp = ModelParams::init(&cfg, 11).unwrap();
        // two centroids straddling the embedding space
        let centroids =
            Array::from_vec(2, 4, vec![0.5, 0.5, 0.5, 0.5, -0.5, -0.5, -0.5, -0.5]).unwrap();
        mp.attach_centroids(centroids.clone()).unwrap();
        let mut file = ModelFile::new(
            &mp,
            cfg,
            VariableRanges::default(),
            ScalerStats { min: [50.0; 6], max: [150.0; 6] },
        );
        file.k = Some(2);
        file.centroids = Some(centroids);
        let path = dir.join("model.json");
        file.save(&path).unwrap();
        path
    }

    fn c_path(p: &Path) -> CString {
        CString::new(p.to_str().unwrap()).unwrap()
    }

    #[test]
    fn load_inspect_assign_free() {
        let dir = tempfile::tempdir().unwrap();
        let path = tiny_clustered_model(dir.path());
        let cpath = c_path(&path);
        let mut handle: *mut DticModel = ptr::null_mut();
        let status = unsafe { dtic_model_load(cpath.as_ptr(), &mut handle) };
        assert_eq!(status, DticStatus::DticOk);
        assert!(!handle.is_null());
        assert_eq!(unsafe { dtic_model_num_phenotypes(handle) }, 2);
        assert_eq!(unsafe { dtic_model_embedding_dim(handle) }, 4);

        // one observation series per variable, native units
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut lens = [0usize; N_VARS];
        for v in Variable::ALL {
            let d = v.index() as f64;
            times.extend([10.0 + d, 100.0 + d, 300.0 + d]);
            let x = match v {
                Variable::Temp => 37.0,
                Variable::Spo2 => 97.0,
                Variable::Rr => 14.0,
                _ => 90.0 + d,
            };
            values.extend([x, x + 1.0, x - 1.0]);
            lens[v.index()] = 3;
        }
        let mut phen = u32::MAX;
        let mut dist = f64::NAN;
        let status = unsafe {
            dtic_assign(
                handle,
                times.as_ptr(),
                values.as_ptr(),
                lens.as_ptr(),
                &mut phen,
                &mut dist,
            )
        };
        assert_eq!(status, DticStatus::DticOk);
        assert!(phen < 2);
        assert!(dist.is_finite() && dist >= 0.0);

        // same input, same answer
        let mut phen2 = u32::MAX;
        let mut dist2 = f64::NAN;
        let status = unsafe {
            dtic_assign(
                handle,
                times.as_ptr(),
                values.as_ptr(),
                lens.as_ptr(),
                &mut phen2,
                &mut dist2,
            )
        };
        assert_eq!(status, DticStatus::DticOk);
        assert_eq!((phen, dist.to_bits()), (phen2, dist2.to_bits()));

        unsafe { dtic_model_free(handle) };
    }

    #[test]
    fn null_and_bad_inputs_set_errors() {
        let mut handle: *mut DticModel = ptr::null_mut();
        let status = unsafe { dtic_model_load(ptr::null(), &mut handle) };
        assert_eq!(status, DticStatus::DticNullArgument);
        assert!(!dtic_last_error().is_null());

        let missing = CString::new("/nonexistent/model.json").unwrap();
        let status = unsafe { dtic_model_load(missing.as_ptr(), &mut handle) };
        assert_eq!(status, DticStatus::DticInvalidInput);
        let msg = unsafe { CStr::from_ptr(dtic_last_error()) }.to_str().unwrap();
        assert!(!msg.is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = tiny_clustered_model(dir.path());
        let cpath = c_path(&path);
        let status = unsafe { dtic_model_load(cpath.as_ptr(), &mut handle) };
        assert_eq!(status, DticStatus::DticOk);

        // decreasing times within a variable are rejected
        let times = [100.0, 50.0];
        let values = [90.0, 91.0];
        let lens = [2usize, 0, 0, 0, 0, 0];
        let mut phen = 0u32;
        let mut dist = 0f64;
        let status = unsafe {
            dtic_assign(handle, times.as_ptr(), values.as_ptr(), lens.as_ptr(), &mut phen, &mut dist)
        };
        assert_eq!(status, DticStatus::DticInvalidInput);
        let msg = unsafe { CStr::from_ptr(dtic_last_error()) }.to_str().unwrap();
        assert!(msg.contains("strictly increasing"), "{msg}");

        // an encounter that cleans down to >1 empty series is ineligible
        let times: Vec<f64> = vec![10.0];
        let values = vec![90.0];
        let lens = [1usize, 0, 0, 0, 0, 0];
        let status = unsafe {
            dtic_assign(handle, times.as_ptr(), values.as_ptr(), lens.as_ptr(), &mut phen, &mut dist)
        };
        assert_eq!(status, DticStatus::DticInvalidInput);

        unsafe { dtic_model_free(handle) };
        unsafe { dtic_model_free(ptr::null_mut()) };
    }

    #[test]
    fn unclustered_model_refuses_assign() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.hidden = 4;
        cfg.grid_len = 8;
        let mp = ModelParams::init(&cfg, 3).unwrap();
        let file =
            ModelFile::new(&mp, cfg, VariableRanges::default(), ScalerStats::identity());
        let path = dir.path().join("pretrained.json");
        file.save(&path).unwrap();
        let cpath = c_path(&path);
        let mut handle: *mut DticModel = ptr::null_mut();
        assert_eq!(unsafe { dtic_model_load(cpath.as_ptr(), &mut handle) }, DticStatus::DticOk);
        assert_eq!(unsafe { dtic_model_num_phenotypes(handle) }, 0);
        let times = [10.0];
        let values = [0.5];
        let lens = [1usize, 0, 0, 0, 0, 0];
        let mut phen = 0u32;
        let mut dist = 0f64;
        let status = unsafe {
            dtic_assign(handle, times.as_ptr(), values.as_ptr(), lens.as_ptr(), &mut phen, &mut dist)
        };
        assert_eq!(status, DticStatus::DticInvalidInput);
        let msg = unsafe { CStr::from_ptr(dtic_last_error()) }.to_str().unwrap();
        assert!(msg.contains("centroids"), "{msg}");
        unsafe { dtic_model_free(handle) };
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(dtic_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
