//! Value-form forward passes over whole cohorts.
//!
//! A [`PreparedCohort`] caches, per encounter and variable, the squared
//! time-distance matrix against the reference grid together with its row and
//! column minima. Those matrices depend only on observation times, so they
//! are shared between an encounter and any fake derived from it, and between
//! the pure forward pass and the training graph (where they enter as
//! constants).

use std::thread;

use crate::autodiff::Array;
use crate::clustering::assign_nearest;
use crate::error::{Error, Result};
use crate::interpnet::{col_min, interpolate_encounter, row_min, sq_dist_matrix, ReferenceGrid};
use crate::model::ModelParams;
use crate::reinterp::{recon_loss, reconstruct_encounter_with_theta};
use crate::seq2seq::{decode_batch, encode_batch};
use crate::timeseries::{extrema_labels, Encounter, N_VARS};

#[derive(Debug, Clone)]
pub struct PreparedEncounter {
    pub enc: Encounter,
    /// Scaled extrema labels from the seventh-hour window.
    pub labels: [Option<f64>; N_VARS],
    pub times: [Vec<f64>; N_VARS],
    pub values: [Vec<f64>; N_VARS],
    /// Squared distances, observations x grid points.
    pub d2: [Array; N_VARS],
    /// Per-grid-point minima of `d2` (interpolation kernel shift).
    pub d2_col_min: [Vec<f64>; N_VARS],
    /// Per-observation minima of `d2` (re-interpolation kernel shift).
    pub d2_row_min: [Vec<f64>; N_VARS],
}

impl PreparedEncounter {
    pub fn new(enc: Encounter, grid: &ReferenceGrid) -> Result<Self> {
        let labels = extrema_labels(&enc);
        let mut times: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::new());
        let mut values: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::new());
        let mut d2: [Array; N_VARS] = std::array::from_fn(|_| Array::zeros(0, 0));
        let mut d2_col_min: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::new());
        let mut d2_row_min: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::new());
        for d in 0..N_VARS {
            if enc.series[d].points.is_empty() {
                return Err(Error::validation(format!(
                    "encounter {}: empty {} series; impute before preparing",
                    enc.id,
                    enc.series[d].variable.name()
                )));
            }
            times[d] = enc.series[d].times().collect();
            values[d] = enc.series[d].values().collect();
            d2[d] = sq_dist_matrix(&times[d], grid.points());
            d2_col_min[d] = col_min(&d2[d]);
            d2_row_min[d] = row_min(&d2[d]);
        }
        Ok(PreparedEncounter { enc, labels, times, values, d2, d2_col_min, d2_row_min })
    }

    /// `d2` with the per-grid-point minimum subtracted from each column.
    pub fn interp_const(&self, d: usize) -> Array {
        let (rows, cols) = self.d2[d].shape();
        let mut a = self.d2[d].clone();
        for i in 0..rows {
            for k in 0..cols {
                let v = a.get(i, k) - self.d2_col_min[d][k];
                a.set(i, k, v);
            }
        }
        a
    }

    /// `d2` with the per-observation minimum subtracted from each row.
    pub fn reinterp_const(&self, d: usize) -> Array {
        let (rows, cols) = self.d2[d].shape();
        let mut a = self.d2[d].clone();
        for i in 0..rows {
            for k in 0..cols {
                let v = a.get(i, k) - self.d2_row_min[d][i];
                a.set(i, k, v);
            }
        }
        a
    }

    pub fn n_obs(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
pub struct PreparedCohort {
    pub grid: ReferenceGrid,
    pub encounters: Vec<PreparedEncounter>,
}

impl PreparedCohort {
    /// Prepare scaled, imputed encounters against a fresh uniform grid.
    pub fn prepare(encounters: Vec<Encounter>, grid_len: usize) -> Result<Self> {
        let grid = ReferenceGrid::uniform(grid_len)?;
        let encounters = encounters
            .into_iter()
            .map(|e| PreparedEncounter::new(e, &grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedCohort { grid, encounters })
    }

    pub fn len(&self) -> usize {
        self.encounters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encounters.is_empty()
    }
}

/// Interpolation representations for a set of encounters, stacked
/// encounter-major into one `(B*T) x 18` array.
fn stacked_reps(mp: &ModelParams, pc: &PreparedCohort, idx: &[usize]) -> Result<Array> {
    let iv = mp.interp_values();
    let t_len = pc.grid.len();
    let mut data = Vec::with_capacity(idx.len() * t_len * 3 * N_VARS);
    for &i in idx {
        let rep = interpolate_encounter(&pc.encounters[i].enc, &pc.grid, &iv)?;
        data.extend_from_slice(rep.data());
    }
    Array::from_vec(idx.len() * t_len, 3 * N_VARS, data)
}

/// Embed every encounter; rows follow cohort order. The result is identical
/// for any `threads >= 1`.
pub fn embed_cohort(mp: &ModelParams, pc: &PreparedCohort, threads: usize) -> Result<Array> {
    let n = pc.len();
    let h = mp.hidden;
    if n == 0 {
        return Array::from_vec(0, h, Vec::new());
    }
    let enc_p = mp.encoder_values();
    let t_len = pc.grid.len();
    let threads = threads.max(1).min(n);
    let chunk = n.div_ceil(threads);
    let mut out = vec![0.0; n * h];
    let embed_range = |start: usize, len: usize, dst: &mut [f64]| -> Result<()> {
        let idx: Vec<usize> = (start..start + len).collect();
        let reps = stacked_reps(mp, pc, &idx)?;
        let ctx = encode_batch(&reps, len, t_len, &enc_p)?;
        dst.copy_from_slice(ctx.data());
        Ok(())
    };
    if threads == 1 {
        embed_range(0, n, &mut out)?;
    } else {
        thread::scope(|scope| -> Result<()> {
            let mut handles = Vec::new();
            let mut rest: &mut [f64] = &mut out;
            let mut start = 0;
            while start < n {
                let len = chunk.min(n - start);
                let (head, tail) = rest.split_at_mut(len * h);
                rest = tail;
                let embed_range = &embed_range;
                handles.push(scope.spawn(move || embed_range(start, len, head)));
                start += len;
            }
            for handle in handles {
                handle.join().expect("embed worker panicked")?;
            }
            Ok(())
        })?;
    }
    Array::from_vec(n, h, out)
}

/// Decode the given embeddings back through the RBF re-interpolation and
/// return each encounter's per-variable estimates at its observation times.
pub fn reconstruct_cohort(
    mp: &ModelParams,
    pc: &PreparedCohort,
    embeddings: &Array,
) -> Result<Vec<[Vec<f64>; N_VARS]>> {
    let n = pc.len();
    if embeddings.shape() != (n, mp.hidden) {
        return Err(Error::shape(
            "reconstruct_cohort",
            format!("embeddings {:?} for {n} encounters", embeddings.shape()),
        ));
    }
    let t_len = pc.grid.len();
    let outs = decode_batch(embeddings, t_len, &mp.decoder_values(), &mp.readout_values())?;
    let theta = mp.theta();
    let mut result = Vec::with_capacity(n);
    for (e, pe) in pc.encounters.iter().enumerate() {
        let mut dec = Array::zeros(t_len, N_VARS);
        for (k, step) in outs.iter().enumerate() {
            for d in 0..N_VARS {
                dec.set(k, d, step.get(e, d));
            }
        }
        result.push(reconstruct_encounter_with_theta(&pe.enc, &pc.grid, &dec, theta)?);
    }
    Ok(result)
}

/// Pooled reconstruction MSE of the whole cohort under the current model.
pub fn cohort_recon_loss(
    mp: &ModelParams,
    pc: &PreparedCohort,
    threads: usize,
) -> Result<Option<f64>> {
    let embeddings = embed_cohort(mp, pc, threads)?;
    let recon = reconstruct_cohort(mp, pc, &embeddings)?;
    let batch: Vec<(&Encounter, [Vec<f64>; N_VARS])> =
        pc.encounters.iter().map(|pe| &pe.enc).zip(recon).collect();
    Ok(recon_loss(&batch))
}

/// Nearest-centroid label and Euclidean distance per cohort row.
pub fn assign_cohort(embeddings: &Array, centroids: &Array) -> Result<Vec<(usize, f64)>> {
    (0..embeddings.rows()).map(|i| assign_nearest(embeddings.row_slice(i), centroids)).collect()
}
