//! Single-layer GRU encoder/decoder over the interpolated representation.
//!
//! Gate convention: `z` interpolates toward the candidate state,
//! `h' = (1 - z) . h + z . h~`, so all-zero parameters halve the state each
//! step and an all-zero input sequence encodes to the zero vector.
//!
//! The decoder starts from the encoder context, consumes
//! `[previous output; context]` at every step (first previous output is
//! zero), and reads each state out through an affine layer.

use crate::autodiff::array::gemm;
use crate::autodiff::Array;
use crate::error::{Error, Result};

/// One GRU layer's weights, value form. Shapes: `w_x*` are `input x hidden`,
/// `w_h*` are `hidden x hidden`, biases are `1 x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruValues {
    pub w_xz: Array,
    pub w_hz: Array,
    pub b_z: Array,
    pub w_xr: Array,
    pub w_hr: Array,
    pub b_r: Array,
    pub w_xh: Array,
    pub w_hh: Array,
    pub b_h: Array,
}

impl GruValues {
    pub fn input_dim(&self) -> usize {
        self.w_xz.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xz.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_dim(), self.hidden_dim());
        let want = [
            ("w_xz", (i, h)),
            ("w_hz", (h, h)),
            ("b_z", (1, h)),
            ("w_xr", (i, h)),
            ("w_hr", (h, h)),
            ("b_r", (1, h)),
            ("w_xh", (i, h)),
            ("w_hh", (h, h)),
            ("b_h", (1, h)),
        ];
        for (name, shape) in want {
            let got = self.field(name).shape();
            if got != shape {
                return Err(Error::shape(format!("gru {name}"), format!("{got:?} vs {shape:?}")));
            }
        }
        Ok(())
    }

    fn field(&self, name: &str) -> &Array {
        match name {
            "w_xz" => &self.w_xz,
            "w_hz" => &self.w_hz,
            "b_z" => &self.b_z,
            "w_xr" => &self.w_xr,
            "w_hr" => &self.w_hr,
            "b_r" => &self.b_r,
            "w_xh" => &self.w_xh,
            "w_hh" => &self.w_hh,
            "b_h" => &self.b_h,
            _ => unreachable!("unknown gru field {name}"),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// affine: `x @ w + b` with `b` broadcast over rows.
fn affine(x: &Array, w: &Array, b: &Array) -> Array {
    let mut out = Array::zeros(x.rows(), w.cols());
    gemm(false, false, 1.0, x, w, 0.0, &mut out);
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            let v = out.get(r, c) + b.get(0, c);
            out.set(r, c, v);
        }
    }
    out
}

/// One GRU step for a batch: `x` is `B x input`, `h` is `B x hidden`.
pub fn gru_cell(x: &Array, h: &Array, p: &GruValues) -> Result<Array> {
    if x.cols() != p.input_dim() || h.cols() != p.hidden_dim() || x.rows() != h.rows() {
        return Err(Error::shape(
            "gru_cell",
            format!(
                "x {:?}, h {:?} vs input {} hidden {}",
                x.shape(),
                h.shape(),
                p.input_dim(),
                p.hidden_dim()
            ),
        ));
    }
    let mut z = affine(x, &p.w_xz, &p.b_z);
    gemm(false, false, 1.0, h, &p.w_hz, 1.0, &mut z);
    let z = z.map(sigmoid);

    let mut r = affine(x, &p.w_xr, &p.b_r);
    gemm(false, false, 1.0, h, &p.w_hr, 1.0, &mut r);
    let r = r.map(sigmoid);

    let mut rh = h.clone();
    for (a, b) in rh.data_mut().iter_mut().zip(r.data()) {
        *a *= b;
    }
    let mut cand = affine(x, &p.w_xh, &p.b_h);
    gemm(false, false, 1.0, &rh, &p.w_hh, 1.0, &mut cand);
    let cand = cand.map(f64::tanh);

    let mut out = Array::zeros(h.rows(), h.cols());
    for i in 0..out.len() {
        let (hv, zv, cv) = (h.data()[i], z.data()[i], cand.data()[i]);
        out.data_mut()[i] = (1.0 - zv) * hv + zv * cv;
    }
    Ok(out)
}

/// Run the encoder over a batch of stacked representations. `reps` is
/// `(B*T) x input` with encounter-major rows; returns the final hidden
/// states, `B x hidden`.
pub fn encode_batch(reps: &Array, batch: usize, t_len: usize, p: &GruValues) -> Result<Array> {
    if reps.rows() != batch * t_len {
        return Err(Error::shape(
            "encode_batch",
            format!("{} rows for batch {batch} x {t_len}", reps.rows()),
        ));
    }
    let mut h = Array::zeros(batch, p.hidden_dim());
    let mut x = Array::zeros(batch, reps.cols());
    for k in 0..t_len {
        for e in 0..batch {
            let src = reps.row_slice(e * t_len + k);
            x.data_mut()[e * src.len()..(e + 1) * src.len()].copy_from_slice(src);
        }
        h = gru_cell(&x, &h, p)?;
    }
    Ok(h)
}

/// Encode a single encounter's `T x input` representation.
pub fn encode(rep: &Array, p: &GruValues) -> Result<Vec<f64>> {
    let h = encode_batch(rep, 1, rep.rows(), p)?;
    Ok(h.into_data())
}

/// Affine readout weights from decoder state to the six variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutValues {
    pub w: Array,
    pub b: Array,
}

/// Decode `t_len` steps from a batch of contexts (`B x hidden`). Returns the
/// readouts per step, each `B x out`.
pub fn decode_batch(
    context: &Array,
    t_len: usize,
    p: &GruValues,
    readout: &ReadoutValues,
) -> Result<Vec<Array>> {
    let hidden = p.hidden_dim();
    let out_dim = readout.w.cols();
    if p.input_dim() != out_dim + hidden {
        return Err(Error::shape(
            "decode_batch",
            format!("decoder input {} vs out {out_dim} + hidden {hidden}", p.input_dim()),
        ));
    }
    if readout.w.rows() != hidden || readout.b.shape() != (1, out_dim) {
        return Err(Error::shape(
            "decode_batch",
            format!("readout {:?} / {:?}", readout.w.shape(), readout.b.shape()),
        ));
    }
    let batch = context.rows();
    let mut s = context.clone();
    let mut prev = Array::zeros(batch, out_dim);
    let mut outputs = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        // x = [prev | context]
        let mut x = Array::zeros(batch, out_dim + hidden);
        for e in 0..batch {
            let row = &mut x.data_mut()[e * (out_dim + hidden)..(e + 1) * (out_dim + hidden)];
            row[..out_dim].copy_from_slice(prev.row_slice(e));
            row[out_dim..].copy_from_slice(context.row_slice(e));
        }
        s = gru_cell(&x, &s, p)?;
        prev = affine(&s, &readout.w, &readout.b);
        outputs.push(prev.clone());
    }
    Ok(outputs)
}
