//! Finite-difference verification of tape gradients.

use crate::autodiff::tape::{NodeId, ParamStore, Tape};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Relative-error denominator floor. Central differences on an O(1) loss
/// carry ~1e-11 of roundoff noise, so gradient entries below this floor are
/// effectively checked against an absolute tolerance of `GRAD_TOL * REL_FLOOR`.
pub const REL_FLOOR: f64 = 1e-6;

/// Compare analytic gradients against central finite differences for every
/// entry of every parameter. Returns the worst relative error
/// `|a - n| / max(|a|, |n|, REL_FLOOR)`; returns infinity instead of
/// panicking if the builder fails.
pub fn grad_check<F>(store: &mut ParamStore, build: F) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    grad_check_with_step(store, build, FD_STEP)
}

pub fn grad_check_with_step<F>(store: &mut ParamStore, build: F, h: f64) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store)?;
        Ok(tape.value(loss).item())
    };

    let analytic = {
        let mut tape = Tape::new();
        let loss = match build(&mut tape, store) {
            Ok(l) => l,
            Err(_) => return f64::INFINITY,
        };
        match tape.backward(loss, store) {
            Ok(g) => g,
            Err(_) => return f64::INFINITY,
        }
    };

    let mut worst = 0.0f64;
    for pid in 0..store.len() {
        for j in 0..store.get(pid).len() {
            let orig = store.get(pid).data()[j];
            store.get_mut(pid).data_mut()[j] = orig + h;
            let up = eval(store);
            store.get_mut(pid).data_mut()[j] = orig - h;
            let down = eval(store);
            store.get_mut(pid).data_mut()[j] = orig;
            let (up, down) = match (up, down) {
                (Ok(u), Ok(d)) => (u, d),
                _ => return f64::INFINITY,
            };
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pid].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}
