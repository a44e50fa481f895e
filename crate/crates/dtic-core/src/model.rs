//! Model parameters and the on-disk model file.
//!
//! Every learnable tensor lives in one [`ParamStore`] under a stable name, in
//! a fixed registration order. The order is part of the file format: a saved
//! model lists its arrays in exactly this order, and loading verifies names
//! and shapes against the layout implied by the stored config.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, ParamId, ParamStore};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::interpnet::InterpValues;
use crate::rng::stream;
use crate::seq2seq::{GruValues, ReadoutValues};
use crate::timeseries::{ScalerStats, VariableRanges, N_VARS};

pub const FORMAT_VERSION: u32 = 1;
/// Columns per variable in the interpolation representation.
pub const INPUT_DIM: usize = 3 * N_VARS;
pub const OUT_DIM: usize = N_VARS;

#[derive(Debug, Clone, Copy)]
pub struct GruIndex {
    pub w_xz: ParamId,
    pub w_hz: ParamId,
    pub b_z: ParamId,
    pub w_xr: ParamId,
    pub w_hr: ParamId,
    pub b_r: ParamId,
    pub w_xh: ParamId,
    pub w_hh: ParamId,
    pub b_h: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamIndex {
    pub interp_log_alpha: ParamId,
    pub interp_rho: ParamId,
    pub enc: GruIndex,
    pub dec: GruIndex,
    pub readout_w: ParamId,
    pub readout_b: ParamId,
    pub log_theta: ParamId,
    pub reg_w: ParamId,
    pub reg_b: ParamId,
    pub disc_w: ParamId,
    pub disc_b: ParamId,
    /// Present only after clustering attaches trainable centroids.
    pub centroids: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub grid_len: usize,
    pub hidden: usize,
    pub kappa: f64,
    pub store: ParamStore,
    pub index: ParamIndex,
}

/// Registers params in layout order, either freshly initialized or copied
/// from a saved file.
struct Builder<'a> {
    store: ParamStore,
    seed: u64,
    saved: Option<&'a mut std::vec::IntoIter<NamedArray>>,
}

impl Builder<'_> {
    fn push(&mut self, name: &str, init: Array) -> Result<ParamId> {
        let value = match &mut self.saved {
            None => init,
            Some(iter) => {
                let named = iter
                    .next()
                    .ok_or_else(|| Error::validation(format!("model file missing param {name}")))?;
                if named.name != name {
                    return Err(Error::validation(format!(
                        "model file param order: expected {name}, found {}",
                        named.name
                    )));
                }
                if named.array.shape() != init.shape() {
                    return Err(Error::validation(format!(
                        "param {name}: expected shape {:?}, found {:?}",
                        init.shape(),
                        named.array.shape()
                    )));
                }
                named.array
            }
        };
        Ok(self.store.add(name, value))
    }

    /// Uniform init in (-1/sqrt(fan_in), 1/sqrt(fan_in)).
    fn dense(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let bound = 1.0 / (rows as f64).sqrt();
        let mut rng = stream(self.seed, &format!("init/{name}"));
        let data = (0..rows * cols).map(|_| (2.0 * rng.gen::<f64>() - 1.0) * bound).collect();
        self.push(name, Array::from_vec(rows, cols, data).expect("sized init"))
    }

    fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.push(name, Array::zeros(rows, cols))
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> Result<GruIndex> {
        Ok(GruIndex {
            w_xz: self.dense(&format!("{prefix}/w_xz"), input, hidden)?,
            w_hz: self.dense(&format!("{prefix}/w_hz"), hidden, hidden)?,
            b_z: self.zeros(&format!("{prefix}/b_z"), 1, hidden)?,
            w_xr: self.dense(&format!("{prefix}/w_xr"), input, hidden)?,
            w_hr: self.dense(&format!("{prefix}/w_hr"), hidden, hidden)?,
            b_r: self.zeros(&format!("{prefix}/b_r"), 1, hidden)?,
            w_xh: self.dense(&format!("{prefix}/w_xh"), input, hidden)?,
            w_hh: self.dense(&format!("{prefix}/w_hh"), hidden, hidden)?,
            b_h: self.zeros(&format!("{prefix}/b_h"), 1, hidden)?,
        })
    }
}

impl ModelParams {
    /// Fresh parameters for `cfg`, drawn from named sub-streams of `seed`.
    pub fn init(cfg: &RunConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, seed, None)
    }

    fn build(cfg: &RunConfig, seed: u64, saved: Option<Vec<NamedArray>>) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden;
        let mut saved_iter = saved.map(|v| v.into_iter());
        let mut b = Builder { store: ParamStore::new(), seed, saved: saved_iter.as_mut() };

        let mut rho0 = Array::zeros(N_VARS, N_VARS);
        for d in 0..N_VARS {
            rho0.set(d, d, 1.0);
        }
        let log_alpha0 =
            Array::from_vec(N_VARS, 1, vec![cfg.alpha_init.ln(); N_VARS]).expect("sized");

        let interp_log_alpha = b.push("interp/log_alpha", log_alpha0)?;
        let interp_rho = b.push("interp/rho", rho0)?;
        let enc = b.gru("enc", INPUT_DIM, h)?;
        let dec = b.gru("dec", OUT_DIM + h, h)?;
        let readout_w = b.dense("dec/readout_w", h, OUT_DIM)?;
        let readout_b = b.zeros("dec/readout_b", 1, OUT_DIM)?;
        let log_theta =
            b.push("reinterp/log_theta", Array::scalar(cfg.theta_init.ln()))?;
        let reg_w = b.dense("reg/w", h, OUT_DIM)?;
        let reg_b = b.zeros("reg/b", 1, OUT_DIM)?;
        let disc_w = b.dense("disc/w", h, 1)?;
        let disc_b = b.zeros("disc/b", 1, 1)?;

        let centroids = match &mut b.saved {
            Some(iter) => match iter.next() {
                None => None,
                Some(named) => {
                    if named.name != "cluster/centroids" {
                        return Err(Error::validation(format!(
                            "unexpected trailing param {}",
                            named.name
                        )));
                    }
                    if named.array.cols() != h || named.array.rows() == 0 {
                        return Err(Error::validation(format!(
                            "centroids shape {:?} does not match hidden {h}",
                            named.array.shape()
                        )));
                    }
                    Some(b.store.add("cluster/centroids", named.array))
                }
            },
            None => None,
        };
        if let Some(iter) = &mut b.saved {
            if let Some(extra) = iter.next() {
                return Err(Error::validation(format!("unexpected trailing param {}", extra.name)));
            }
        }

        Ok(ModelParams {
            grid_len: cfg.grid_len,
            hidden: h,
            kappa: cfg.kappa,
            store: b.store,
            index: ParamIndex {
                interp_log_alpha,
                interp_rho,
                enc,
                dec,
                readout_w,
                readout_b,
                log_theta,
                reg_w,
                reg_b,
                disc_w,
                disc_b,
                centroids,
            },
        })
    }

    /// Attach trainable centroids (`k x hidden`). Errors if already attached.
    pub fn attach_centroids(&mut self, centroids: Array) -> Result<ParamId> {
        if self.index.centroids.is_some() {
            return Err(Error::validation("centroids already attached"));
        }
        if centroids.cols() != self.hidden || centroids.rows() == 0 {
            return Err(Error::validation(format!(
                "centroids shape {:?} does not match hidden {}",
                centroids.shape(),
                self.hidden
            )));
        }
        let id = self.store.add("cluster/centroids", centroids);
        self.index.centroids = Some(id);
        Ok(id)
    }

    pub fn centroid_values(&self) -> Option<&Array> {
        self.index.centroids.map(|id| self.store.get(id))
    }

    pub fn interp_values(&self) -> InterpValues {
        let la = self.store.get(self.index.interp_log_alpha);
        let rho_a = self.store.get(self.index.interp_rho);
        let mut alpha = [0.0; N_VARS];
        let mut rho = [[0.0; N_VARS]; N_VARS];
        for d in 0..N_VARS {
            alpha[d] = la.get(d, 0).exp();
            for e in 0..N_VARS {
                rho[d][e] = rho_a.get(d, e);
            }
        }
        InterpValues { alpha, rho, kappa: self.kappa }
    }

    fn gru_values(&self, idx: &GruIndex) -> GruValues {
        let g = |id: ParamId| self.store.get(id).clone();
        GruValues {
            w_xz: g(idx.w_xz),
            w_hz: g(idx.w_hz),
            b_z: g(idx.b_z),
            w_xr: g(idx.w_xr),
            w_hr: g(idx.w_hr),
            b_r: g(idx.b_r),
            w_xh: g(idx.w_xh),
            w_hh: g(idx.w_hh),
            b_h: g(idx.b_h),
        }
    }

    pub fn encoder_values(&self) -> GruValues {
        self.gru_values(&self.index.enc)
    }

    pub fn decoder_values(&self) -> GruValues {
        self.gru_values(&self.index.dec)
    }

    pub fn readout_values(&self) -> ReadoutValues {
        ReadoutValues {
            w: self.store.get(self.index.readout_w).clone(),
            b: self.store.get(self.index.readout_b).clone(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.store.get(self.index.log_theta).item().exp()
    }

    pub fn named_arrays(&self) -> Vec<NamedArray> {
        self.store
            .iter()
            .map(|(name, array)| NamedArray { name: name.to_string(), array: array.clone() })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub array: Array,
}

/// One training-log line; `label_change_frac` is set on refresh iterations of
/// the joint phase.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogRow {
    pub phase: String,
    pub iter: usize,
    pub loss_total: f64,
    pub loss_recon: f64,
    pub loss_reg: f64,
    pub loss_bce: f64,
    pub loss_kl: f64,
    pub label_change_frac: Option<f64>,
}

/// Everything needed to resume or apply a model, as one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub config: RunConfig,
    pub ranges: VariableRanges,
    pub scaler: ScalerStats,
    pub params: Vec<NamedArray>,
    /// Cluster count, once clustering has run.
    pub k: Option<usize>,
    /// Final assignment centroids (`k x hidden`), aligned to the refined
    /// centroid order.
    pub centroids: Option<Array>,
    pub train_log: Vec<LogRow>,
}

impl ModelFile {
    pub fn new(
        params: &ModelParams,
        config: RunConfig,
        ranges: VariableRanges,
        scaler: ScalerStats,
    ) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            config,
            ranges,
            scaler,
            params: params.named_arrays(),
            k: None,
            centroids: None,
            train_log: Vec::new(),
        }
    }

    /// Rebuild the live parameter store from the stored arrays.
    pub fn build_params(&self) -> Result<ModelParams> {
        ModelParams::build(&self.config, 0, Some(self.params.clone()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::validation(format!(
                "model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.config.validate()?;
        self.ranges.validate()?;
        self.scaler.validate()?;
        for named in &self.params {
            if !named.array.all_finite() {
                return Err(Error::numeric(format!("param {} is not finite", named.name)));
            }
        }
        if let Some(c) = &self.centroids {
            if c.cols() != self.config.hidden || c.rows() == 0 {
                return Err(Error::validation(format!(
                    "stored centroids shape {:?} does not match hidden {}",
                    c.shape(),
                    self.config.hidden
                )));
            }
            if !c.all_finite() {
                return Err(Error::numeric("stored centroids are not finite"));
            }
            if self.k != Some(c.rows()) {
                return Err(Error::validation(format!(
                    "k = {:?} does not match {} centroid rows",
                    self.k,
                    c.rows()
                )));
            }
        } else if self.k.is_some() {
            return Err(Error::validation("k set without centroids"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.validate()?;
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpnet::ALPHA_INIT;
    use crate::reinterp::THETA_INIT;

    fn small_cfg() -> RunConfig {
        RunConfig { hidden: 8, grid_len: 12, ..RunConfig::default() }
    }

    #[test]
    fn init_layout_names_in_order() {
        let mp = ModelParams::init(&small_cfg(), 0).unwrap();
        let names: Vec<&str> = mp.store.iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec![
                "interp/log_alpha",
                "interp/rho",
                "enc/w_xz",
                "enc/w_hz",
                "enc/b_z",
                "enc/w_xr",
                "enc/w_hr",
                "enc/b_r",
                "enc/w_xh",
                "enc/w_hh",
                "enc/b_h",
                "dec/w_xz",
                "dec/w_hz",
                "dec/b_z",
                "dec/w_xr",
                "dec/w_hr",
                "dec/b_r",
                "dec/w_xh",
                "dec/w_hh",
                "dec/b_h",
                "dec/readout_w",
                "dec/readout_b",
                "reinterp/log_theta",
                "reg/w",
                "reg/b",
                "disc/w",
                "disc/b",
            ]
        );
    }

    #[test]
    fn init_values_and_bounds() {
        let cfg = small_cfg();
        let mp = ModelParams::init(&cfg, 3).unwrap();
        let iv = mp.interp_values();
        for d in 0..N_VARS {
            assert!((iv.alpha[d] - ALPHA_INIT).abs() < 1e-18);
            for e in 0..N_VARS {
                assert_eq!(iv.rho[d][e], if d == e { 1.0 } else { 0.0 });
            }
        }
        assert!((mp.theta() - THETA_INIT).abs() < 1e-18);
        let enc = mp.encoder_values();
        enc.validate().unwrap();
        assert_eq!(enc.input_dim(), INPUT_DIM);
        assert_eq!(enc.hidden_dim(), 8);
        let bound = 1.0 / (INPUT_DIM as f64).sqrt();
        assert!(enc.w_xz.data().iter().all(|v| v.abs() < bound && *v != 0.0));
        assert!(enc.b_z.data().iter().all(|&v| v == 0.0));
        let dec = mp.decoder_values();
        assert_eq!(dec.input_dim(), OUT_DIM + 8);
        let ro = mp.readout_values();
        assert_eq!(ro.w.shape(), (8, OUT_DIM));
        assert_eq!(ro.b.shape(), (1, OUT_DIM));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ModelParams::init(&small_cfg(), 5).unwrap();
        let b = ModelParams::init(&small_cfg(), 5).unwrap();
        let c = ModelParams::init(&small_cfg(), 6).unwrap();
        assert_eq!(a.encoder_values(), b.encoder_values());
        assert_ne!(a.encoder_values(), c.encoder_values());
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let cfg = small_cfg();
        let mp = ModelParams::init(&cfg, 9).unwrap();
        let file =
            ModelFile::new(&mp, cfg.clone(), VariableRanges::default(), ScalerStats::identity());
        let json = file.to_json().unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_json().unwrap(), json);
        let rebuilt = back.build_params().unwrap();
        assert_eq!(rebuilt.encoder_values(), mp.encoder_values());
        assert_eq!(rebuilt.decoder_values(), mp.decoder_values());
        assert_eq!(rebuilt.interp_values(), mp.interp_values());
    }

    #[test]
    fn centroids_round_trip_through_params() {
        let cfg = small_cfg();
        let mut mp = ModelParams::init(&cfg, 1).unwrap();
        let c = Array::from_vec(3, 8, (0..24).map(|i| i as f64).collect()).unwrap();
        mp.attach_centroids(c.clone()).unwrap();
        assert!(mp.attach_centroids(c.clone()).is_err());
        let file =
            ModelFile::new(&mp, cfg, VariableRanges::default(), ScalerStats::identity());
        let rebuilt = file.build_params().unwrap();
        assert_eq!(rebuilt.centroid_values().unwrap(), &c);
    }

    #[test]
    fn version_and_shape_mismatches_rejected() {
        let cfg = small_cfg();
        let mp = ModelParams::init(&cfg, 0).unwrap();
        let mut file =
            ModelFile::new(&mp, cfg, VariableRanges::default(), ScalerStats::identity());
        file.format_version = 2;
        assert!(file.validate().is_err());
        file.format_version = FORMAT_VERSION;
        file.validate().unwrap();
        // swap two params out of order
        file.params.swap(0, 1);
        assert!(file.build_params().is_err());
        file.params.swap(0, 1);
        // k without centroids
        file.k = Some(2);
        assert!(file.validate().is_err());
    }
}
