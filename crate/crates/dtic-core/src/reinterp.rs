//! RBF re-interpolation: read the decoder's grid-aligned outputs back at the
//! original observation times and score the reconstruction.
//!
//! One shared bandwidth `theta` (stored as its log) weights grid points by
//! `exp(-theta (t - r_k)^2)`; the estimate at an observation time is the
//! normalized weighted mean of the decoder outputs for that variable. As in
//! the interpolation kernels, weights are shifted by the per-observation
//! minimum squared distance, which cancels in the ratio.

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::interpnet::ReferenceGrid;
use crate::timeseries::types::{Encounter, Variable, N_VARS};

/// Bandwidth at initialization, per minute^2: noticeable weight within half
/// an hour of a grid point (exp(-theta * 30^2) = e^-1).
pub const THETA_INIT: f64 = 1.0 / 900.0;

/// Single RBF weight, unshifted form.
pub fn rbf_weight(r: f64, t: f64, theta: f64) -> f64 {
    (-theta * (r - t) * (r - t)).exp()
}

/// Estimate one variable at the given times from its decoder column.
/// `grid_values[k]` is the decoder output at grid point `k`.
pub fn reinterpolate(
    times: &[f64],
    grid: &ReferenceGrid,
    grid_values: &[f64],
    theta: f64,
) -> Result<Vec<f64>> {
    if grid_values.len() != grid.len() {
        return Err(Error::shape(
            "reinterpolate",
            format!("{} grid values for {} grid points", grid_values.len(), grid.len()),
        ));
    }
    Ok(times
        .iter()
        .map(|&t| {
            let min_d2 = grid
                .points()
                .iter()
                .map(|&r| (r - t) * (r - t))
                .fold(f64::INFINITY, f64::min);
            let (mut num, mut den) = (0.0, 0.0);
            for (&r, &v) in grid.points().iter().zip(grid_values) {
                let w = (-theta * ((r - t) * (r - t) - min_d2)).exp();
                num += w * v;
                den += w;
            }
            num / den
        })
        .collect())
}

/// Reconstruct all six variables of one encounter from its decoder output
/// (`T x 6`, grid-major rows). Returns per-variable estimates aligned with
/// the encounter's observation times.
pub fn reconstruct_encounter(
    enc: &Encounter,
    grid: &ReferenceGrid,
    decoder_out: &Array,
) -> Result<[Vec<f64>; N_VARS]> {
    reconstruct_encounter_with_theta(enc, grid, decoder_out, THETA_INIT)
}

pub fn reconstruct_encounter_with_theta(
    enc: &Encounter,
    grid: &ReferenceGrid,
    decoder_out: &Array,
    theta: f64,
) -> Result<[Vec<f64>; N_VARS]> {
    if decoder_out.shape() != (grid.len(), N_VARS) {
        return Err(Error::shape(
            "reconstruct_encounter",
            format!("decoder output {:?} vs ({}, {N_VARS})", decoder_out.shape(), grid.len()),
        ));
    }
    let mut out: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::new());
    for v in Variable::ALL {
        let d = v.index();
        let times: Vec<f64> = enc.series[d].times().collect();
        let col: Vec<f64> = (0..grid.len()).map(|k| decoder_out.get(k, d)).collect();
        out[d] = reinterpolate(&times, grid, &col, theta)?;
    }
    Ok(out)
}

/// Pooled mean squared error over every observed point of every *real*
/// encounter in the batch; fake encounters contribute to neither the sum nor
/// the count. `None` when the batch holds no real observation.
pub fn recon_loss(batch: &[(&Encounter, [Vec<f64>; N_VARS])]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (enc, estimates) in batch {
        if enc.is_fake {
            continue;
        }
        for v in Variable::ALL {
            let d = v.index();
            debug_assert_eq!(estimates[d].len(), enc.series[d].len());
            for (x, est) in enc.series[d].values().zip(&estimates[d]) {
                let e = est - x;
                sum += e * e;
                n += 1;
            }
        }
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_init_value() {
        assert!((THETA_INIT - 1.0 / 900.0).abs() < 1e-18);
        assert!((rbf_weight(0.0, 30.0, THETA_INIT) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn estimate_at_grid_point_with_sharp_kernel_recovers_grid_value() {
        let grid = ReferenceGrid::uniform(36).unwrap();
        let values: Vec<f64> = (0..36).map(|k| 0.01 * k as f64).collect();
        // With a very sharp kernel the nearest grid point dominates.
        let est = reinterpolate(&[100.0, 250.0], &grid, &values, 1.0).unwrap();
        assert!((est[0] - 0.10).abs() < 1e-12);
        assert!((est[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn two_grid_point_hand_example() {
        // grid {0, 180}, values {1, 3}, theta = 1e-4, observation at t = 60:
        // d^2 = {3600, 14400}; shifted weights {1, e^{-1.08}};
        // est = (1 + 3 e^{-1.08}) / (1 + e^{-1.08}).
        let grid = ReferenceGrid::uniform(2).unwrap();
        assert_eq!(grid.points(), &[0.0, 180.0]);
        let est = reinterpolate(&[60.0], &grid, &[1.0, 3.0], 1e-4).unwrap();
        let w2 = (-1.08f64).exp();
        let want = (1.0 + 3.0 * w2) / (1.0 + w2);
        assert!((est[0] - want).abs() < 1e-14, "{} vs {want}", est[0]);
    }

    #[test]
    fn constant_grid_values_reconstruct_constant() {
        let grid = ReferenceGrid::uniform(36).unwrap();
        let est = reinterpolate(&[0.0, 7.7, 359.0], &grid, &vec![0.42; 36], THETA_INIT).unwrap();
        for e in est {
            assert!((e - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn recon_loss_pools_and_skips_fakes() {
        let mut real = Encounter::empty("r");
        real.series[0].points = vec![(0.0, 1.0), (10.0, 2.0)];
        real.series[1].points = vec![(5.0, 3.0)];
        let mut fake = real.clone();
        fake.is_fake = true;

        let est_real: [Vec<f64>; N_VARS] = [
            vec![1.5, 2.5],
            vec![3.0],
            vec![],
            vec![],
            vec![],
            vec![],
        ];
        // Fake estimates are wildly off; they must not matter.
        let est_fake: [Vec<f64>; N_VARS] =
            [vec![100.0, 100.0], vec![100.0], vec![], vec![], vec![], vec![]];

        let loss = recon_loss(&[(&real, est_real), (&fake, est_fake)]).unwrap();
        // errors 0.5, 0.5, 0.0 over 3 points
        assert!((loss - (0.25 + 0.25 + 0.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn recon_loss_all_fake_is_none() {
        let mut fake = Encounter::empty("f");
        fake.series[0].points = vec![(0.0, 1.0)];
        fake.is_fake = true;
        let est: [Vec<f64>; N_VARS] = [vec![0.0], vec![], vec![], vec![], vec![], vec![]];
        assert!(recon_loss(&[(&fake, est)]).is_none());
    }

    #[test]
    fn shape_errors() {
        let grid = ReferenceGrid::uniform(4).unwrap();
        assert!(reinterpolate(&[0.0], &grid, &[1.0, 2.0], THETA_INIT).is_err());
        let enc = Encounter::empty("e");
        assert!(reconstruct_encounter(&enc, &grid, &Array::zeros(3, N_VARS)).is_err());
    }
}
