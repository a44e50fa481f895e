//! Interpolation network: squared-exponential kernel interpolation of each
//! irregular series onto a fixed reference grid, producing three channels per
//! variable — a cross-variable smooth estimate, a short-timescale transient,
//! and a log observation intensity.

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::timeseries::types::{Encounter, Variable, MODEL_WINDOW_MIN, N_VARS};

/// Transient channel bandwidth multiplier (fixed, not trained).
pub const KAPPA: f64 = 10.0;
/// Kernel bandwidth at initialization, per minute^2: half weight at 60 min,
/// exp(-alpha * 60^2) = 1/2.
pub const ALPHA_INIT: f64 = std::f64::consts::LN_2 / 3600.0;
/// Cross-channel mixing denominator guard.
pub const MIX_EPS: f64 = 1e-8;
/// Default reference grid length (10-minute spacing over six hours).
pub const GRID_LEN_DEFAULT: usize = 36;
/// Channels per variable in the interpolated representation.
pub const N_CHANNELS: usize = 3;

/// Strictly increasing reference times covering `[0, 360)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    points: Vec<f64>,
}

impl ReferenceGrid {
    /// `len` evenly spaced points `r_k = 360 k / len`.
    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::validation("reference grid must be non-empty"));
        }
        let points = (0..len).map(|k| MODEL_WINDOW_MIN * k as f64 / len as f64).collect();
        Ok(ReferenceGrid { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Observation intensity at `r`: sum of unnormalized kernel weights.
pub fn intensity(points: &[(f64, f64)], r: f64, alpha: f64) -> f64 {
    points.iter().map(|&(t, _)| (-alpha * (r - t) * (r - t)).exp()).sum()
}

/// Kernel-weighted mean at `r`. Weights are computed with the squared
/// distances shifted by their minimum, which leaves the ratio unchanged but
/// keeps the denominator well away from underflow at any bandwidth.
pub fn smooth_interp(points: &[(f64, f64)], r: f64, alpha: f64) -> f64 {
    debug_assert!(!points.is_empty(), "smooth_interp on an empty series");
    let min_d2 =
        points.iter().map(|&(t, _)| (r - t) * (r - t)).fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, x) in points {
        let w = (-alpha * ((r - t) * (r - t) - min_d2)).exp();
        num += w * x;
        den += w;
    }
    num / den
}

/// Transient channel: difference between a narrow-bandwidth and the smooth
/// interpolant, `sigma(kappa * alpha) - sigma(alpha)`.
pub fn transient(points: &[(f64, f64)], r: f64, alpha: f64, kappa: f64) -> f64 {
    smooth_interp(points, r, kappa * alpha) - smooth_interp(points, r, alpha)
}

/// Cross-variable smooth channel. `lambda` and `sigma` are indexed
/// `[variable][grid point]`; `rho[d][d2]` weights variable `d2`'s
/// contribution to variable `d`:
/// `chi_d = sum_d2 rho[d][d2] lambda_d2 sigma_d2 / (sum_d2 rho[d][d2] lambda_d2 + eps)`.
pub fn cross_channel(
    lambda: &[Vec<f64>; N_VARS],
    sigma: &[Vec<f64>; N_VARS],
    rho: &[[f64; N_VARS]; N_VARS],
) -> [Vec<f64>; N_VARS] {
    let t_len = lambda[0].len();
    std::array::from_fn(|d| {
        (0..t_len)
            .map(|k| {
                let (mut num, mut den) = (0.0, MIX_EPS);
                for d2 in 0..N_VARS {
                    num += rho[d][d2] * lambda[d2][k] * sigma[d2][k];
                    den += rho[d][d2] * lambda[d2][k];
                }
                num / den
            })
            .collect()
    })
}

/// Per-variable kernel bandwidths and the mixing matrix, in value form.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpValues {
    pub alpha: [f64; N_VARS],
    pub rho: [[f64; N_VARS]; N_VARS],
    pub kappa: f64,
}

impl InterpValues {
    pub fn init() -> Self {
        let mut rho = [[0.0; N_VARS]; N_VARS];
        for (d, row) in rho.iter_mut().enumerate() {
            row[d] = 1.0;
        }
        InterpValues { alpha: [ALPHA_INIT; N_VARS], rho, kappa: KAPPA }
    }
}

/// Interpolate one encounter onto the grid. Output is `T x 18`, channel-major
/// columns: cross-channel smooth for the six variables, then transients, then
/// log intensities `ln(1 + lambda)`.
pub fn interpolate_encounter(
    enc: &Encounter,
    grid: &ReferenceGrid,
    params: &InterpValues,
) -> Result<Array> {
    let t_len = grid.len();
    let mut lambda: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::with_capacity(t_len));
    let mut sigma: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::with_capacity(t_len));
    let mut tau: [Vec<f64>; N_VARS] = std::array::from_fn(|_| Vec::with_capacity(t_len));
    for v in Variable::ALL {
        let d = v.index();
        let pts = &enc.series[d].points;
        if pts.is_empty() {
            return Err(Error::validation(format!(
                "encounter {}: {} has no observations; impute before interpolating",
                enc.id,
                v.name()
            )));
        }
        let alpha = params.alpha[d];
        for &r in grid.points() {
            lambda[d].push(intensity(pts, r, alpha));
            let s = smooth_interp(pts, r, alpha);
            sigma[d].push(s);
            tau[d].push(smooth_interp(pts, r, params.kappa * alpha) - s);
        }
    }
    let chi = cross_channel(&lambda, &sigma, &params.rho);

    let mut out = Array::zeros(t_len, N_CHANNELS * N_VARS);
    for k in 0..t_len {
        for d in 0..N_VARS {
            out.set(k, d, chi[d][k]);
            out.set(k, N_VARS + d, tau[d][k]);
            out.set(k, 2 * N_VARS + d, lambda[d][k].ln_1p());
        }
    }
    Ok(out)
}

/// Squared distances from each observation time to each grid point, `I x T`.
/// Shared by the interpolation kernels and RBF re-interpolation.
pub fn sq_dist_matrix(times: &[f64], grid: &[f64]) -> Array {
    let mut out = Array::zeros(times.len(), grid.len());
    for (i, &t) in times.iter().enumerate() {
        for (k, &r) in grid.iter().enumerate() {
            out.set(i, k, (r - t) * (r - t));
        }
    }
    out
}

/// Per-column minima, the stabilizing shifts for normalized kernels.
pub fn col_min(a: &Array) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; a.cols()];
    for r in 0..a.rows() {
        for (c, m) in out.iter_mut().enumerate() {
            *m = m.min(a.get(r, c));
        }
    }
    out
}

/// Per-row minima, used when the kernel is normalized across grid points.
pub fn row_min(a: &Array) -> Vec<f64> {
    (0..a.rows())
        .map(|r| a.row_slice(r).iter().copied().fold(f64::INFINITY, f64::min))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_init_half_weight_at_one_hour() {
        assert!((ALPHA_INIT - 1.9254088348887369e-4).abs() < 1e-19);
        assert!(((-ALPHA_INIT * 3600.0).exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_grid_spacing() {
        let g = ReferenceGrid::uniform(36).unwrap();
        assert_eq!(g.len(), 36);
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(g.points()[1], 10.0);
        assert_eq!(g.points()[35], 350.0);
        assert!(ReferenceGrid::uniform(0).is_err());
    }

    #[test]
    fn smooth_interp_two_point_example() {
        // points (0, 2) and (2, 4) at r = 0 with alpha = 1:
        // (2 + 4 e^-4) / (1 + e^-4) = 2.035972419924183
        let pts = [(0.0, 2.0), (2.0, 4.0)];
        let got = smooth_interp(&pts, 0.0, 1.0);
        assert!((got - 2.035972419924183).abs() < 1e-12, "{got}");
    }

    #[test]
    fn smooth_interp_shift_invariance() {
        // Far from all observations, naive weights underflow but the shifted
        // form still returns a convex combination of the values.
        let pts = [(0.0, 2.0), (2.0, 4.0)];
        let got = smooth_interp(&pts, 350.0, 1.0);
        assert!((2.0..=4.0).contains(&got), "{got}");
        assert!((got - 4.0).abs() < 1e-9); // nearest point (t = 2) dominates
    }

    #[test]
    fn intensity_sums_kernel_mass() {
        let pts = [(0.0, 5.0), (10.0, 6.0)];
        let got = intensity(&pts, 0.0, 0.01);
        assert!((got - (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn single_point_series_has_flat_smooth_and_zero_transient() {
        let pts = [(120.0, 0.7)];
        for r in [0.0, 120.0, 350.0] {
            assert_eq!(smooth_interp(&pts, r, ALPHA_INIT), 0.7);
            assert_eq!(transient(&pts, r, ALPHA_INIT, KAPPA), 0.0);
        }
    }

    #[test]
    fn cross_channel_identity_mixing_recovers_sigma() {
        let lambda: [Vec<f64>; N_VARS] = std::array::from_fn(|d| vec![1.0 + d as f64]);
        let sigma: [Vec<f64>; N_VARS] = std::array::from_fn(|d| vec![0.1 * d as f64]);
        let chi = cross_channel(&lambda, &sigma, &InterpValues::init().rho);
        for d in 0..N_VARS {
            let lam = 1.0 + d as f64;
            let want = lam * (0.1 * d as f64) / (lam + MIX_EPS);
            assert!((chi[d][0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_channel_uniform_mixing_pools_variables() {
        let lambda: [Vec<f64>; N_VARS] = std::array::from_fn(|_| vec![2.0]);
        let sigma: [Vec<f64>; N_VARS] = std::array::from_fn(|d| vec![d as f64]);
        let rho = [[1.0; N_VARS]; N_VARS];
        let chi = cross_channel(&lambda, &sigma, &rho);
        // all variables pooled: weighted mean of 0..5 = 2.5
        for d in 0..N_VARS {
            assert!((chi[d][0] - 2.5).abs() < 1e-7);
        }
    }

    #[test]
    fn representation_layout() {
        let mut enc = Encounter::empty("t");
        for v in Variable::ALL {
            enc.series[v.index()].points = vec![(0.0, 0.5), (100.0, 0.6), (200.0, 0.4)];
        }
        let grid = ReferenceGrid::uniform(8).unwrap();
        let rep = interpolate_encounter(&enc, &grid, &InterpValues::init()).unwrap();
        assert_eq!(rep.shape(), (8, 18));
        // identity rho and identical series: chi column approximates sigma
        let pts = &enc.series[0].points;
        for k in 0..8 {
            let r = grid.points()[k];
            let sig = smooth_interp(pts, r, ALPHA_INIT);
            let lam = intensity(pts, r, ALPHA_INIT);
            assert!((rep.get(k, 0) - lam * sig / (lam + MIX_EPS)).abs() < 1e-12);
            assert!(
                (rep.get(k, 6) - transient(pts, r, ALPHA_INIT, KAPPA)).abs() < 1e-12
            );
            assert!((rep.get(k, 12) - lam.ln_1p()).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolate_rejects_empty_series() {
        let enc = Encounter::empty("t");
        let grid = ReferenceGrid::uniform(4).unwrap();
        assert!(interpolate_encounter(&enc, &grid, &InterpValues::init()).is_err());
    }

    #[test]
    fn sq_dist_and_minima_helpers() {
        let d2 = sq_dist_matrix(&[0.0, 3.0], &[1.0, 5.0]);
        assert_eq!(d2.data(), &[1.0, 25.0, 4.0, 4.0]);
        assert_eq!(col_min(&d2), vec![1.0, 4.0]);
        assert_eq!(row_min(&d2), vec![1.0, 4.0]);
    }
}
