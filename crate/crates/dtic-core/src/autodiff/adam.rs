//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::autodiff::array::Array;
use crate::autodiff::tape::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!("adam lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::validation(format!("adam {name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::validation(format!("adam eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Array> =
            (0..store.len()).map(|i| Array::zeros(store.get(i).shape().0, store.get(i).shape().1)).collect();
        AdamState { step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update over every parameter in `store`. Rejects non-finite gradients
/// before touching any parameter, so a failed step leaves the store intact.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &[Array],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    if grads.len() != store.len() {
        return Err(Error::validation(format!(
            "{} gradients for {} parameters",
            grads.len(),
            store.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != store.get(i).shape() {
            return Err(Error::shape(
                format!("adam `{}`", store.name(i)),
                format!("gradient {:?} vs parameter {:?}", g.shape(), store.get(i).shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient for parameter `{}`",
                store.name(i)
            )));
        }
    }

    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);
    for (i, g) in grads.iter().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = store.get_mut(i).data_mut();
        for ((mj, vj), (pj, &gj)) in m.iter_mut().zip(v.iter_mut()).zip(p.iter_mut().zip(g.data())) {
            *mj = hyper.beta1 * *mj + (1.0 - hyper.beta1) * gj;
            *vj = hyper.beta2 * *vj + (1.0 - hyper.beta2) * gj * gj;
            let mhat = *mj / bc1;
            let vhat = *vj / bc2;
            *pj -= hyper.lr * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
