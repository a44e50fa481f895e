//! Cluster-count selection: silhouette, Davies-Bouldin, distortion (elbow),
//! and the gap statistic, reported side by side for a range of k. No index
//! picks k automatically; the report exists to be read.

use std::io;

use rand::Rng;

use crate::autodiff::Array;
use crate::clustering::{kmeans, KmeansOpts};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient. Singleton clusters score 0 by convention.
pub fn silhouette(points: &Array, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n || n == 0 {
        return Err(Error::validation(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().max().unwrap() + 1;
    let counts = label_counts(labels, k);
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::validation("silhouette needs at least two clusters"));
    }
    let mut total = 0.0;
    let mut dist_sums = vec![0.0f64; k];
    for i in 0..n {
        let own = labels[i];
        if counts[own] == 1 {
            continue; // s(i) = 0
        }
        dist_sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                dist_sums[labels[j]] += dist(points.row_slice(i), points.row_slice(j));
            }
        }
        let a = dist_sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| dist_sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index: mean over clusters of the worst ratio of summed
/// within-cluster scatter to centroid separation. Lower is better.
pub fn davies_bouldin(points: &Array, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    let d = points.cols();
    if labels.len() != n || n == 0 {
        return Err(Error::validation(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().max().unwrap() + 1;
    let counts = label_counts(labels, k);
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::validation("davies_bouldin requires every label in 0..k present"));
    }
    if k < 2 {
        return Err(Error::validation("davies_bouldin needs at least two clusters"));
    }
    let mut centroids = Array::zeros(k, d);
    for (i, &l) in labels.iter().enumerate() {
        let row = points.row_slice(i);
        let dst = &mut centroids.data_mut()[l * d..(l + 1) * d];
        for (a, b) in dst.iter_mut().zip(row) {
            *a += b;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        for v in &mut centroids.data_mut()[j * d..(j + 1) * d] {
            *v /= c as f64;
        }
    }
    let mut scatter = vec![0.0f64; k];
    for (i, &l) in labels.iter().enumerate() {
        scatter[l] += dist(points.row_slice(i), centroids.row_slice(l));
    }
    for (j, &c) in counts.iter().enumerate() {
        scatter[j] /= c as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let m = dist(centroids.row_slice(i), centroids.row_slice(j));
            let r = if m > 0.0 { (scatter[i] + scatter[j]) / m } else { f64::INFINITY };
            worst = worst.max(r);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

fn label_counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Gap statistic against `b_refs` uniform reference draws over the data's
/// bounding box: `gap(k) = mean_b ln(W_kb) - ln(W_k)` with the simulation
/// standard error `se = sd_b * sqrt(1 + 1/B)`.
pub fn gap_statistic(
    points: &Array,
    ks: &[usize],
    b_refs: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if b_refs == 0 {
        return Err(Error::validation("gap statistic needs at least one reference draw"));
    }
    let (n, d) = points.shape();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for (c, &v) in points.row_slice(i).iter().enumerate() {
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    // Reference W values are shared across k, so draw the datasets once.
    let refs: Vec<Array> = (0..b_refs)
        .map(|b| {
            let mut rng = stream(seed, &format!("gap/ref/{b}"));
            let data = (0..n * d)
                .map(|i| {
                    let c = i % d;
                    lo[c] + rng.gen::<f64>() * (hi[c] - lo[c])
                })
                .collect();
            Array::from_vec(n, d, data).expect("sized draw")
        })
        .collect();

    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let w = run_w(points, k, restarts, derive_seed(seed, &format!("gap/data/{k}")))?;
        let log_ws: Vec<f64> = refs
            .iter()
            .enumerate()
            .map(|(b, r)| run_w(r, k, restarts, derive_seed(seed, &format!("gap/fit/{k}/{b}"))))
            .collect::<Result<Vec<_>>>()?;
        let mean = log_ws.iter().sum::<f64>() / b_refs as f64;
        let var = log_ws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / b_refs as f64;
        let gap = mean - w;
        let se = var.sqrt() * (1.0 + 1.0 / b_refs as f64).sqrt();
        out.push((gap, se));
    }
    Ok(out)
}

fn run_w(points: &Array, k: usize, restarts: usize, seed: u64) -> Result<f64> {
    let fit = kmeans(points, &KmeansOpts { k, restarts, max_iter: 100, seed })?;
    if !(fit.inertia > 0.0) {
        return Err(Error::numeric(format!("zero within-cluster dispersion at k = {k}")));
    }
    Ok(fit.inertia.ln())
}

/// Tibshirani's rule: the smallest k with `gap(k) >= gap(k+1) - se(k+1)`,
/// evaluable only where k+1 was also profiled.
pub fn gap_recommended_k(ks: &[usize], gaps: &[(f64, f64)]) -> Option<usize> {
    for i in 0..ks.len().saturating_sub(1) {
        if ks[i + 1] == ks[i] + 1 && gaps[i].0 >= gaps[i + 1].0 - gaps[i + 1].1 {
            return Some(ks[i]);
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct KRow {
    pub k: usize,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub distortion: f64,
    pub gap: f64,
    pub gap_se: f64,
    pub sizes: Vec<usize>,
    /// True when some cluster holds fewer than `min_size_frac` of the points.
    pub small_cluster: bool,
}

#[derive(Debug, Clone)]
pub struct KReport {
    pub rows: Vec<KRow>,
    pub n: usize,
    pub min_size_frac: f64,
    pub gap_k: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct KReportOpts {
    pub restarts: usize,
    pub gap_refs: usize,
    pub min_size_frac: f64,
    pub seed: u64,
}

impl Default for KReportOpts {
    fn default() -> Self {
        KReportOpts { restarts: 10, gap_refs: 10, min_size_frac: 0.01, seed: 0 }
    }
}

/// Profile every k in `ks` over the same embeddings.
pub fn k_report(embeddings: &Array, ks: &[usize], opts: &KReportOpts) -> Result<KReport> {
    if ks.is_empty() {
        return Err(Error::validation("k report needs at least one k"));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("ks must be strictly increasing"));
    }
    if ks[0] < 2 {
        return Err(Error::validation("k must be at least 2"));
    }
    let n = embeddings.rows();
    let gaps = gap_statistic(embeddings, ks, opts.gap_refs, opts.restarts, opts.seed)?;
    let mut rows = Vec::with_capacity(ks.len());
    for (i, &k) in ks.iter().enumerate() {
        let fit = kmeans(
            embeddings,
            &KmeansOpts {
                k,
                restarts: opts.restarts,
                max_iter: 100,
                seed: derive_seed(opts.seed, &format!("select_k/{k}")),
            },
        )?;
        let sizes = label_counts(&fit.labels, k);
        let small = sizes.iter().any(|&s| (s as f64) < opts.min_size_frac * n as f64);
        rows.push(KRow {
            k,
            silhouette: silhouette(embeddings, &fit.labels)?,
            davies_bouldin: davies_bouldin(embeddings, &fit.labels)?,
            distortion: fit.inertia,
            gap: gaps[i].0,
            gap_se: gaps[i].1,
            sizes,
            small_cluster: small,
        });
    }
    let gap_k = gap_recommended_k(ks, &gaps);
    Ok(KReport { rows, n, min_size_frac: opts.min_size_frac, gap_k })
}

impl KReport {
    /// CSV: `k,silhouette,dbi,distortion,gap,gap_se,sizes_json`.
    pub fn write_csv(&self, writer: impl io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "silhouette", "dbi", "distortion", "gap", "gap_se", "sizes_json"])?;
        for r in &self.rows {
            let sizes = serde_json::to_string(&r.sizes)?;
            w.write_record([
                r.k.to_string(),
                format!("{}", r.silhouette),
                format!("{}", r.davies_bouldin),
                format!("{}", r.distortion),
                format!("{}", r.gap),
                format!("{}", r.gap_se),
                sizes,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable table; `*` flags rows with a cluster under the size
    /// threshold.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str("   k  silhouette        dbi  distortion         gap      gap_se  sizes\n");
        for r in &self.rows {
            let flag = if r.small_cluster { '*' } else { ' ' };
            let sizes: Vec<String> = r
                .sizes
                .iter()
                .map(|&c| format!("{c} ({:.1}%)", 100.0 * c as f64 / self.n as f64))
                .collect();
            s.push_str(&format!(
                "{flag}{:>4}  {:>10.4}  {:>9.4}  {:>10.2}  {:>10.4}  {:>10.4}  {}\n",
                r.k,
                r.silhouette,
                r.davies_bouldin,
                r.distortion,
                r.gap,
                r.gap_se,
                sizes.join(", ")
            ));
        }
        if self.rows.iter().any(|r| r.small_cluster) {
            s.push_str(&format!(
                "* at least one cluster below {:.1}% of {} records\n",
                100.0 * self.min_size_frac,
                self.n
            ));
        }
        match self.gap_k {
            Some(k) => s.push_str(&format!("gap rule suggests k = {k}\n")),
            None => s.push_str("gap rule satisfied by no profiled k\n"),
        }
        s
    }
}
