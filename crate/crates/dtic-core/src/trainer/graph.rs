//! Tape assembly for one training batch.
//!
//! Mirrors the value-form forward pass exactly: interpolation representation,
//! GRU encoder over reals and fakes, decoder and RBF re-interpolation over
//! reals, the two auxiliary heads, and (joint phase) the clustering KL term.
//! Fake encounters share their twin's distance matrices — resampling changes
//! values, never timestamps.

use crate::autodiff::{Array, NodeId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::interpnet::MIX_EPS;
use crate::model::{GruIndex, ModelParams, ParamIndex};
use crate::pipeline::{PreparedCohort, PreparedEncounter};
use crate::timeseries::N_VARS;

pub struct BatchSpec<'a> {
    pub pc: &'a PreparedCohort,
    /// Indices of the real encounters, into `pc.encounters`.
    pub real_idx: &'a [usize],
    /// Resampled values for the fake twin of each real encounter; empty for
    /// a fake-free batch.
    pub fakes: &'a [[Vec<f64>; N_VARS]],
    /// Target-distribution rows aligned with `real_idx`; enables the KL term.
    pub p_rows: Option<&'a Array>,
    /// Weight of the KL term in the total loss.
    pub lambda: f64,
}

pub struct LossNodes {
    pub total: NodeId,
    pub recon: NodeId,
    pub reg: Option<NodeId>,
    pub bce: NodeId,
    pub kl: Option<NodeId>,
    /// Encoder contexts for the whole batch (reals first, then fakes).
    pub ctx: NodeId,
    /// Contexts of the real rows only.
    pub ctx_real: NodeId,
}

struct GruNodes {
    w_xz: NodeId,
    w_hz: NodeId,
    b_z: NodeId,
    w_xr: NodeId,
    w_hr: NodeId,
    b_r: NodeId,
    w_xh: NodeId,
    w_hh: NodeId,
    b_h: NodeId,
}

fn gru_nodes(tape: &mut Tape, store: &ParamStore, idx: &GruIndex) -> GruNodes {
    GruNodes {
        w_xz: tape.param(idx.w_xz, store),
        w_hz: tape.param(idx.w_hz, store),
        b_z: tape.param(idx.b_z, store),
        w_xr: tape.param(idx.w_xr, store),
        w_hr: tape.param(idx.w_hr, store),
        b_r: tape.param(idx.b_r, store),
        w_xh: tape.param(idx.w_xh, store),
        w_hh: tape.param(idx.w_hh, store),
        b_h: tape.param(idx.b_h, store),
    }
}

/// One GRU step: `h' = (1 - z) . h + z . htilde`, written as
/// `h - z.h + z.htilde` to avoid a ones constant.
fn gru_step(tape: &mut Tape, x: NodeId, h: NodeId, g: &GruNodes) -> Result<NodeId> {
    let gate = |tape: &mut Tape, wx, wh, b| -> Result<NodeId> {
        let xw = tape.matmul(x, wx)?;
        let hw = tape.matmul(h, wh)?;
        let s = tape.add(xw, hw)?;
        Ok(tape.add_row(s, b)?)
    };
    let z = {
        let s = gate(tape, g.w_xz, g.w_hz, g.b_z)?;
        tape.sigmoid(s)
    };
    let r = {
        let s = gate(tape, g.w_xr, g.w_hr, g.b_r)?;
        tape.sigmoid(s)
    };
    let htil = {
        let xw = tape.matmul(x, g.w_xh)?;
        let rh = tape.mul(r, h)?;
        let hw = tape.matmul(rh, g.w_hh)?;
        let s = tape.add(xw, hw)?;
        let s = tape.add_row(s, g.b_h)?;
        tape.tanh(s)
    };
    let zh = tape.mul(z, h)?;
    let zt = tape.mul(z, htil)?;
    let keep = tape.sub(h, zh)?;
    tape.add(keep, zt)
}

/// Interpolation representation of one encounter (`T x 18`), from either its
/// real values or a fake's resampled values.
fn encounter_rep(
    tape: &mut Tape,
    pe: &PreparedEncounter,
    values: &[Vec<f64>; N_VARS],
    alpha: NodeId,
    rho: NodeId,
    kappa: f64,
) -> Result<NodeId> {
    let mut lambdas = Vec::with_capacity(N_VARS);
    let mut sigmas = Vec::with_capacity(N_VARS);
    let mut taus = Vec::with_capacity(N_VARS);
    for d in 0..N_VARS {
        let i_len = values[d].len();
        if i_len != pe.times[d].len() {
            return Err(Error::shape(
                "encounter_rep",
                format!("{} values for {} times", i_len, pe.times[d].len()),
            ));
        }
        let alpha_d = tape.gather_rows(alpha, &[d])?;
        let kalpha_d = tape.scale(alpha_d, kappa);
        let shifted = tape.constant(pe.interp_const(d));
        let raw = tape.constant(pe.d2[d].clone());
        let x_row = tape.constant(Array::from_vec(1, i_len, values[d].clone())?);
        let ones = tape.constant(Array::from_vec(1, i_len, vec![1.0; i_len])?);
        let weighted_mean = |tape: &mut Tape, bandwidth: NodeId| -> Result<NodeId> {
            let m = tape.mul_scalar_node(shifted, bandwidth)?;
            let n = tape.neg(m);
            let w = tape.exp(n);
            let num = tape.matmul(x_row, w)?;
            let den = tape.matmul(ones, w)?;
            tape.div(num, den)
        };
        let sig = weighted_mean(tape, alpha_d)?;
        let sig_k = weighted_mean(tape, kalpha_d)?;
        let tau = tape.sub(sig_k, sig)?;
        let lam = {
            let m = tape.mul_scalar_node(raw, alpha_d)?;
            let n = tape.neg(m);
            let w = tape.exp(n);
            tape.matmul(ones, w)?
        };
        lambdas.push(lam);
        sigmas.push(sig);
        taus.push(tau);
    }
    let lam6 = tape.vconcat(&lambdas)?;
    let sig6 = tape.vconcat(&sigmas)?;
    let tau6 = tape.vconcat(&taus)?;
    let chi = {
        let ls = tape.mul(lam6, sig6)?;
        let num = tape.matmul(rho, ls)?;
        let den = tape.matmul(rho, lam6)?;
        let den = tape.add_scalar(den, MIX_EPS);
        tape.div(num, den)?
    };
    let lnlam = {
        let a = tape.add_scalar(lam6, 1.0);
        tape.ln(a)
    };
    let stacked = tape.vconcat(&[chi, tau6, lnlam])?;
    Ok(tape.transpose(stacked))
}

/// Assemble the full batch loss on `tape`, reading parameters from `store`.
pub fn build_losses(
    tape: &mut Tape,
    store: &ParamStore,
    index: &ParamIndex,
    kappa: f64,
    spec: &BatchSpec,
) -> Result<LossNodes> {
    let pc = spec.pc;
    let t_len = pc.grid.len();
    let b_real = spec.real_idx.len();
    if b_real == 0 {
        return Err(Error::validation("batch needs at least one real encounter"));
    }
    if !spec.fakes.is_empty() && spec.fakes.len() != b_real {
        return Err(Error::validation(format!(
            "{} fakes for {b_real} real encounters",
            spec.fakes.len()
        )));
    }
    let b_total = b_real + spec.fakes.len();

    let alpha = {
        let la = tape.param(index.interp_log_alpha, store);
        tape.exp(la)
    };
    let rho = tape.param(index.interp_rho, store);
    let theta = {
        let lt = tape.param(index.log_theta, store);
        tape.exp(lt)
    };

    // Interpolation representations: reals first, then fakes (twin order).
    let mut reps = Vec::with_capacity(b_total);
    for &i in spec.real_idx {
        let pe = &pc.encounters[i];
        reps.push(encounter_rep(tape, pe, &pe.values, alpha, rho, kappa)?);
    }
    for (j, fake) in spec.fakes.iter().enumerate() {
        let pe = &pc.encounters[spec.real_idx[j]];
        reps.push(encounter_rep(tape, pe, fake, alpha, rho, kappa)?);
    }
    let stacked = tape.vconcat(&reps)?; // (B*T) x 18, encounter-major

    // Encoder over the whole batch.
    let enc = gru_nodes(tape, store, &index.enc);
    let mut h = tape.constant(Array::zeros(b_total, store.get(index.enc.w_hz).rows()));
    for k in 0..t_len {
        let idx: Vec<usize> = (0..b_total).map(|e| e * t_len + k).collect();
        let x = tape.gather_rows(stacked, &idx)?;
        h = gru_step(tape, x, h, &enc)?;
    }
    let ctx = h;
    let ctx_real =
        if spec.fakes.is_empty() { ctx } else { tape.gather_rows(ctx, &collect_range(b_real))? };

    // Decoder over reals only.
    let dec = gru_nodes(tape, store, &index.dec);
    let readout_w = tape.param(index.readout_w, store);
    let readout_b = tape.param(index.readout_b, store);
    let mut s = ctx_real;
    let mut prev = tape.constant(Array::zeros(b_real, N_VARS));
    let mut outs = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let x = tape.hconcat(&[prev, ctx_real])?;
        s = gru_step(tape, x, s, &dec)?;
        let o = tape.matmul(s, readout_w)?;
        let o = tape.add_row(o, readout_b)?;
        outs.push(o);
        prev = o;
    }
    let decoded = tape.vconcat(&outs)?; // (T*B_real) x 6, step-major

    // RBF re-interpolation back to each real observation.
    let mut sq_acc: Option<NodeId> = None;
    let mut n_points = 0usize;
    for (j, &i) in spec.real_idx.iter().enumerate() {
        let pe = &pc.encounters[i];
        let rows: Vec<usize> = (0..t_len).map(|t| t * b_real + j).collect();
        let dec_e = tape.gather_rows(decoded, &rows)?; // T x 6
        for d in 0..N_VARS {
            let i_len = pe.values[d].len();
            let col = tape.gather_cols(dec_e, &[d])?;
            let c = tape.constant(pe.reinterp_const(d));
            let w = {
                let m = tape.mul_scalar_node(c, theta)?;
                let n = tape.neg(m);
                tape.exp(n)
            };
            let num = tape.matmul(w, col)?;
            let ones = tape.constant(Array::from_vec(t_len, 1, vec![1.0; t_len])?);
            let den = tape.matmul(w, ones)?;
            let est = tape.div(num, den)?;
            let obs = tape.constant(Array::from_vec(i_len, 1, pe.values[d].clone())?);
            let diff = tape.sub(est, obs)?;
            let sq = tape.mul(diff, diff)?;
            let total = tape.sum(sq);
            sq_acc = Some(match sq_acc {
                None => total,
                Some(acc) => tape.add(acc, total)?,
            });
            n_points += i_len;
        }
    }
    let recon = tape.scale(sq_acc.expect("b_real >= 1"), 1.0 / n_points as f64);

    // Extrema regression over reals that carry at least one label.
    let reg = {
        let mut rows = Vec::new();
        let mut label_data = Vec::new();
        let mut mask_data = Vec::new();
        let mut n_present = 0usize;
        for (j, &i) in spec.real_idx.iter().enumerate() {
            let labels = &pc.encounters[i].labels;
            if labels.iter().any(Option::is_some) {
                rows.push(j);
                for l in labels {
                    label_data.push(l.unwrap_or(0.0));
                    mask_data.push(if l.is_some() { 1.0 } else { 0.0 });
                    n_present += l.is_some() as usize;
                }
            }
        }
        if rows.is_empty() {
            None
        } else {
            let reg_w = tape.param(index.reg_w, store);
            let reg_b = tape.param(index.reg_b, store);
            let ctx_l = tape.gather_rows(ctx_real, &rows)?;
            let preds = {
                let m = tape.matmul(ctx_l, reg_w)?;
                tape.add_row(m, reg_b)?
            };
            let labels = tape.constant(Array::from_vec(rows.len(), N_VARS, label_data)?);
            let mask = tape.constant(Array::from_vec(rows.len(), N_VARS, mask_data)?);
            let diff = tape.sub(preds, labels)?;
            let masked = tape.mul(diff, mask)?;
            let sq = tape.mul(masked, masked)?;
            let total = tape.sum(sq);
            Some(tape.scale(total, 1.0 / n_present as f64))
        }
    };

    // Real-vs-fake discrimination over the whole batch.
    let bce = {
        let disc_w = tape.param(index.disc_w, store);
        let disc_b = tape.param(index.disc_b, store);
        let logits = {
            let m = tape.matmul(ctx, disc_w)?;
            tape.add_row(m, disc_b)?
        };
        let mut targets = vec![1.0; b_real];
        targets.extend(std::iter::repeat(0.0).take(spec.fakes.len()));
        tape.bce_with_logits(logits, targets)?
    };

    // Clustering KL over reals, against the frozen target rows.
    let kl = match spec.p_rows {
        None => None,
        Some(p) => {
            let mu_id = index
                .centroids
                .ok_or_else(|| Error::validation("KL term requires attached centroids"))?;
            let k = store.get(mu_id).rows();
            if p.shape() != (b_real, k) {
                return Err(Error::shape(
                    "build_losses",
                    format!("target rows {:?} for batch {b_real} x {k}", p.shape()),
                ));
            }
            let mu = tape.param(mu_id, store);
            let ones = tape.constant(Array::from_vec(b_real, 1, vec![1.0; b_real])?);
            let mut us = Vec::with_capacity(k);
            for j in 0..k {
                let mu_j = tape.gather_rows(mu, &[j])?;
                let diff = tape.sub_row(ctx_real, mu_j)?;
                let sq = tape.mul(diff, diff)?;
                let d2 = tape.row_sum(sq);
                let dp1 = tape.add_scalar(d2, 1.0);
                us.push(tape.div(ones, dp1)?);
            }
            let u = tape.hconcat(&us)?; // B_real x k, unnormalized q
            let den = tape.row_sum(u);
            let p_node = tape.constant(p.clone());
            let t1 = {
                let l = tape.ln(u);
                let nl = tape.neg(l);
                let m = tape.mul(p_node, nl)?;
                tape.sum(m)
            };
            let t2 = {
                let l = tape.ln(den);
                tape.sum(l)
            };
            // KL = (sum p ln p + t1 + t2) / B, using sum_j p_ij = 1.
            let p_ent: f64 = p.data().iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum();
            let raw = tape.add(t1, t2)?;
            let scaled = tape.scale(raw, 1.0 / b_real as f64);
            Some(tape.add_scalar(scaled, p_ent / b_real as f64))
        }
    };

    let mut total = tape.add(recon, bce)?;
    if let Some(r) = reg {
        total = tape.add(total, r)?;
    }
    if let Some(kln) = kl {
        let weighted = tape.scale(kln, spec.lambda);
        total = tape.add(total, weighted)?;
    }

    Ok(LossNodes { total, recon, reg, bce, kl, ctx, ctx_real })
}

fn collect_range(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Build the batch graph against the live model parameters.
pub fn build_batch_graph(mp: &ModelParams, spec: &BatchSpec) -> Result<(Tape, LossNodes)> {
    let mut tape = Tape::new();
    let nodes = build_losses(&mut tape, &mp.store, &mp.index, mp.kappa, spec)?;
    Ok((tape, nodes))
}
