//! Two-pass training.
//!
//! Pass one (pretrain) fits the interpolation/seq2seq stack under the
//! reconstruction loss plus both auxiliary tasks. Pass two (joint) attaches
//! trainable centroids initialized by k-means and adds the weighted KL
//! clustering term, refreshing the target distribution on a fixed cadence and
//! stopping once assignments settle. Each pass runs its own Adam state; a
//! saved model is always a phase boundary.

pub mod graph;

use rand::seq::SliceRandom;

use crate::autodiff::{adam_step, AdamState, Array};
use crate::clustering::{kmeans, match_centroids, soft_assign, target_dist, KmeansOpts};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{LogRow, ModelParams};
use crate::pipeline::{embed_cohort, PreparedCohort};
use crate::rng::{derive_seed, stream};
use crate::timeseries::{make_fake, N_VARS};
use graph::{build_batch_graph, BatchSpec};

/// Epoch-shuffled batch order without replacement.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    seed: u64,
    phase: &'static str,
}

impl Batcher {
    fn new(n: usize, seed: u64, phase: &'static str) -> Self {
        Batcher { order: (0..n).collect(), pos: n, epoch: 0, seed, phase }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        if self.pos >= self.order.len() {
            let mut rng =
                stream(self.seed, &format!("train/{}/epoch/{}", self.phase, self.epoch));
            self.order.shuffle(&mut rng);
            self.epoch += 1;
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

fn batch_fakes(
    pc: &PreparedCohort,
    idx: &[usize],
    fraction: f64,
    seed: u64,
    phase: &str,
    iter: usize,
) -> Vec<[Vec<f64>; N_VARS]> {
    let mut rng = stream(seed, &format!("train/{phase}/fake/{iter}"));
    idx.iter()
        .map(|&i| {
            let fake = make_fake(&pc.encounters[i].enc, fraction, &mut rng);
            std::array::from_fn(|d| fake.series[d].values().collect())
        })
        .collect()
}

/// Fail fast on the first non-finite loss term so the caller still holds the
/// finite parameters that produced it.
fn check_finite(phase: &str, iter: usize, terms: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in terms {
        if !v.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite {name} loss at {phase} iteration {iter}"
            )));
        }
    }
    Ok(())
}

fn run_iteration(
    mp: &mut ModelParams,
    pc: &PreparedCohort,
    cfg: &RunConfig,
    adam: &mut AdamState,
    phase: &'static str,
    iter: usize,
    idx: &[usize],
    p_rows: Option<&Array>,
    seed: u64,
) -> Result<LogRow> {
    let fakes = batch_fakes(pc, idx, cfg.fake_fraction, seed, phase, iter);
    let spec = BatchSpec {
        pc,
        real_idx: idx,
        fakes: &fakes,
        p_rows,
        lambda: cfg.lambda_cluster,
    };
    let (tape, nodes) = build_batch_graph(mp, &spec)?;
    let loss_total = tape.value(nodes.total).item();
    let loss_recon = tape.value(nodes.recon).item();
    let loss_reg = nodes.reg.map(|n| tape.value(n).item()).unwrap_or(0.0);
    let loss_bce = tape.value(nodes.bce).item();
    let loss_kl = nodes.kl.map(|n| tape.value(n).item()).unwrap_or(0.0);
    check_finite(
        phase,
        iter,
        &[
            ("reconstruction", loss_recon),
            ("regression", loss_reg),
            ("discrimination", loss_bce),
            ("clustering", loss_kl),
            ("total", loss_total),
        ],
    )?;
    let grads = tape.backward(nodes.total, &mp.store)?;
    adam_step(&mut mp.store, &grads, adam, &cfg.adam())
        .map_err(|e| Error::numeric(format!("{phase} iteration {iter}: {e}")))?;
    Ok(LogRow {
        phase: phase.to_string(),
        iter,
        loss_total,
        loss_recon,
        loss_reg,
        loss_bce,
        loss_kl,
        label_change_frac: None,
    })
}

/// Pass one: reconstruction + extrema regression + discrimination.
pub fn pretrain(
    mp: &mut ModelParams,
    pc: &PreparedCohort,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Vec<LogRow>> {
    if pc.is_empty() {
        return Err(Error::validation("cannot train on an empty cohort"));
    }
    let mut adam = AdamState::new(&mp.store);
    let mut batcher = Batcher::new(pc.len(), seed, "pretrain");
    let mut log = Vec::with_capacity(cfg.pretrain_iters);
    for iter in 1..=cfg.pretrain_iters {
        let idx = batcher.next_batch(cfg.batch_size);
        log.push(run_iteration(mp, pc, cfg, &mut adam, "pretrain", iter, &idx, None, seed)?);
    }
    Ok(log)
}

pub fn hard_labels(q: &Array) -> Vec<usize> {
    (0..q.rows())
        .map(|i| {
            let row = q.row_slice(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub log: Vec<LogRow>,
    /// True when assignment churn fell below `delta` before the iteration cap.
    pub stopped_by_delta: bool,
    /// Final phenotype labels from k-means on the refined embeddings,
    /// renumbered to match the refined centroid order.
    pub final_labels: Vec<usize>,
    /// Final k-means centroids, rows aligned with the refined centroids.
    pub centroids: Array,
    /// Fraction of records where the k-means label agrees with the soft
    /// assignment's argmax.
    pub agreement: f64,
}

/// Pass two: attach k-means centroids and optimize the joint loss, then read
/// out final labels with one more k-means over the refined embeddings.
pub fn joint_train(
    mp: &mut ModelParams,
    pc: &PreparedCohort,
    cfg: &RunConfig,
    k: usize,
    seed: u64,
    threads: usize,
) -> Result<JointOutcome> {
    if mp.index.centroids.is_some() {
        return Err(Error::validation("joint training already ran for this model"));
    }
    if pc.is_empty() {
        return Err(Error::validation("cannot train on an empty cohort"));
    }

    let emb = embed_cohort(mp, pc, threads)?;
    let init = kmeans(
        &emb,
        &KmeansOpts {
            k,
            restarts: cfg.restarts,
            max_iter: 100,
            seed: derive_seed(seed, "init_clusters"),
        },
    )?;
    mp.attach_centroids(init.centroids)?;

    let mut adam = AdamState::new(&mp.store);
    let mut batcher = Batcher::new(pc.len(), seed, "joint");
    let mut log = Vec::with_capacity(cfg.joint_iters);
    let mut stopped = false;

    // Initial targets from the freshly attached centroids; no stop check.
    let q = soft_assign(&emb, mp.centroid_values().expect("just attached"))?;
    let mut p = target_dist(&q)?;
    let mut assignments = hard_labels(&q);

    for iter in 1..=cfg.joint_iters {
        let idx = batcher.next_batch(cfg.batch_size);
        let p_rows = {
            let kk = p.cols();
            let mut data = Vec::with_capacity(idx.len() * kk);
            for &i in &idx {
                data.extend_from_slice(p.row_slice(i));
            }
            Array::from_vec(idx.len(), kk, data)?
        };
        let mut row =
            run_iteration(mp, pc, cfg, &mut adam, "joint", iter, &idx, Some(&p_rows), seed)?;

        if iter % cfg.target_refresh == 0 {
            let emb = embed_cohort(mp, pc, threads)?;
            let q = soft_assign(&emb, mp.centroid_values().expect("attached"))?;
            p = target_dist(&q)?;
            let next = hard_labels(&q);
            let changed = next
                .iter()
                .zip(&assignments)
                .filter(|(a, b)| a != b)
                .count() as f64
                / pc.len() as f64;
            assignments = next;
            row.label_change_frac = Some(changed);
            log.push(row);
            if changed < cfg.delta {
                stopped = true;
                break;
            }
        } else {
            log.push(row);
        }
    }

    // Final labels: plain k-means on the refined embeddings, aligned to the
    // refined centroids so phenotype numbering is stable.
    let emb = embed_cohort(mp, pc, threads)?;
    let fit = kmeans(
        &emb,
        &KmeansOpts {
            k,
            restarts: cfg.restarts,
            max_iter: 100,
            seed: derive_seed(seed, "finalize"),
        },
    )?;
    let mu = mp.centroid_values().expect("attached");
    let perm = match_centroids(&fit.centroids, mu)?;
    let final_labels: Vec<usize> = fit.labels.iter().map(|&l| perm[l]).collect();
    let mut centroids = Array::zeros(k, mp.hidden);
    for j in 0..k {
        let src = fit.centroids.row_slice(j);
        let dst_row = perm[j];
        for (c, &v) in src.iter().enumerate() {
            centroids.set(dst_row, c, v);
        }
    }
    let q = soft_assign(&emb, mu)?;
    let q_labels = hard_labels(&q);
    let agreement = final_labels
        .iter()
        .zip(&q_labels)
        .filter(|(a, b)| a == b)
        .count() as f64
        / pc.len() as f64;

    Ok(JointOutcome { log, stopped_by_delta: stopped, final_labels, centroids, agreement })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::small_cohort;

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            hidden: 6,
            grid_len: 9,
            batch_size: 4,
            pretrain_iters: 40,
            joint_iters: 30,
            target_refresh: 5,
            ..RunConfig::default()
        }
    }

    #[test]
    fn pretrain_descends_and_is_deterministic() {
        let cfg = tiny_cfg();
        let pc = small_cohort(8, cfg.grid_len);
        let mut mp1 = ModelParams::init(&cfg, 4).unwrap();
        let log1 = pretrain(&mut mp1, &pc, &cfg, 4).unwrap();
        let mut mp2 = ModelParams::init(&cfg, 4).unwrap();
        let log2 = pretrain(&mut mp2, &pc, &cfg, 4).unwrap();
        assert_eq!(log1, log2);
        assert_eq!(mp1.store.get(mp1.index.reg_w), mp2.store.get(mp2.index.reg_w));
        assert_eq!(log1.len(), 40);
        assert_eq!(log1[0].iter, 1);
        let head: f64 = log1[..10].iter().map(|r| r.loss_total).sum::<f64>() / 10.0;
        let tail: f64 = log1[30..].iter().map(|r| r.loss_total).sum::<f64>() / 10.0;
        assert!(tail < head, "no descent: head {head}, tail {tail}");
        assert!(log1.iter().all(|r| r.loss_kl == 0.0 && r.label_change_frac.is_none()));
    }

    #[test]
    fn joint_stops_at_first_refresh_with_loose_delta() {
        let cfg = RunConfig { delta: 2.0, ..tiny_cfg() };
        let pc = small_cohort(10, cfg.grid_len);
        let mut mp = ModelParams::init(&cfg, 1).unwrap();
        pretrain(&mut mp, &pc, &RunConfig { pretrain_iters: 10, ..cfg.clone() }, 1).unwrap();
        let out = joint_train(&mut mp, &pc, &cfg, 2, 1, 1).unwrap();
        // any churn fraction is < 2.0, so the first refresh stops the run
        assert!(out.stopped_by_delta);
        assert_eq!(out.log.len(), cfg.target_refresh);
        let last = out.log.last().unwrap();
        assert!(last.label_change_frac.is_some());
        assert_eq!(last.iter, cfg.target_refresh);
        assert_eq!(out.final_labels.len(), 10);
        assert_eq!(out.centroids.shape(), (2, cfg.hidden));
        assert!((0.0..=1.0).contains(&out.agreement));
        assert!(out.log.iter().all(|r| r.loss_kl.is_finite()));
    }

    #[test]
    fn joint_runs_to_cap_with_zero_delta() {
        // churn < 0.0 is impossible, so the cap is the only exit
        let cfg = RunConfig { delta: 0.0, joint_iters: 12, ..tiny_cfg() };
        let pc = small_cohort(6, cfg.grid_len);
        let mut mp = ModelParams::init(&cfg, 2).unwrap();
        let out = joint_train(&mut mp, &pc, &cfg, 2, 2, 1).unwrap();
        assert!(!out.stopped_by_delta);
        assert_eq!(out.log.len(), 12);
        // refresh iterations carry the churn fraction, others do not
        for row in &out.log {
            assert_eq!(row.label_change_frac.is_some(), row.iter % cfg.target_refresh == 0);
        }
        assert!(joint_train(&mut mp, &pc, &cfg, 2, 2, 1).is_err(), "second joint run must fail");
    }

    #[test]
    fn poisoned_params_abort_with_named_term() {
        let cfg = RunConfig { pretrain_iters: 3, ..tiny_cfg() };
        let pc = small_cohort(4, cfg.grid_len);
        let mut mp = ModelParams::init(&cfg, 3).unwrap();
        // an absurd log-bandwidth overflows exp() in the first forward pass
        mp.store.get_mut(mp.index.interp_log_alpha).data_mut()[0] = 1e300;
        let err = pretrain(&mut mp, &pc, &cfg, 3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pretrain iteration 1"), "{msg}");
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn hard_labels_picks_row_argmax() {
        let q = Array::from_vec(3, 2, vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5]).unwrap();
        assert_eq!(hard_labels(&q), vec![0, 1, 0]);
    }

    #[test]
    fn batcher_visits_everything_each_epoch() {
        let mut b = Batcher::new(10, 9, "pretrain");
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..3 {
            seen.extend(b.next_batch(4));
        }
        // 4 + 4 + 2: the epoch tail is a short batch, not a wrap-around
        assert_eq!(seen.len(), 10);
        let mut first_epoch = seen.clone();
        first_epoch.sort_unstable();
        assert_eq!(first_epoch, (0..10).collect::<Vec<_>>());
        // the next epoch reshuffles into a different order
        let second: Vec<usize> = (0..3).flat_map(|_| b.next_batch(4)).collect();
        assert_eq!(second.len(), 10);
        assert_ne!(seen, second);
    }
}
