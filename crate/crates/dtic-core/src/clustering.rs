//! k-means, DEC-style soft assignments, and label agreement measures.

use rand::Rng;

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy)]
pub struct KmeansOpts {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KmeansOpts {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansOpts { k, restarts: 10, max_iter: 100, seed }
    }
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub centroids: Array,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment pass of the winning restart,
    /// non-increasing by construction.
    pub inertia_trace: Vec<f64>,
    /// Which restart won (ties go to the earliest).
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid of `x`: `(index, squared distance)`; ties pick the lowest
/// index.
fn nearest(x: &[f64], centroids: &Array) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for j in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row_slice(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding and deterministic restarts. The
/// winner is the restart with the lowest inertia (first such restart on
/// ties). Empty clusters are reseeded to the point farthest from its current
/// centroid.
pub fn kmeans(points: &Array, opts: &KmeansOpts) -> Result<KmeansFit> {
    let (n, d) = points.shape();
    if opts.k == 0 || n == 0 || d == 0 {
        return Err(Error::validation(format!("kmeans on {n} points, k = {}, dim = {d}", opts.k)));
    }
    if opts.k > n {
        return Err(Error::validation(format!("k = {} exceeds {} points", opts.k, n)));
    }
    if !points.all_finite() {
        return Err(Error::numeric("kmeans input contains non-finite values"));
    }
    if opts.restarts == 0 {
        return Err(Error::validation("kmeans needs at least one restart"));
    }

    let mut best: Option<KmeansFit> = None;
    for r in 0..opts.restarts {
        let mut rng = stream(opts.seed, &format!("kmeans/restart/{r}"));
        let fit = lloyd(points, opts, &mut rng, r);
        if best.as_ref().map_or(true, |b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &Array, opts: &KmeansOpts, rng: &mut impl Rng, restart: usize) -> KmeansFit {
    let (n, d) = points.shape();
    let k = opts.k;
    let mut centroids = plus_plus_seed(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();

    let assign = |centroids: &Array, labels: &mut [usize]| -> f64 {
        let mut inertia = 0.0;
        for i in 0..n {
            let (j, dist) = nearest(points.row_slice(i), centroids);
            labels[i] = j;
            inertia += dist;
        }
        inertia
    };

    let mut inertia = assign(&centroids, &mut labels);
    trace.push(inertia);

    for _ in 0..opts.max_iter {
        // Means of each cluster.
        let mut sums = Array::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &j) in labels.iter().enumerate() {
            counts[j] += 1;
            let row = points.row_slice(i);
            let dst = &mut sums.data_mut()[j * d..(j + 1) * d];
            for (a, b) in dst.iter_mut().zip(row) {
                *a += b;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                for v in &mut sums.data_mut()[j * d..(j + 1) * d] {
                    *v /= c;
                }
            } else {
                // Keep the old centroid for now; reseeded below.
                sums.data_mut()[j * d..(j + 1) * d].copy_from_slice(centroids.row_slice(j));
            }
        }
        centroids = sums;

        // Reseed empty clusters to the farthest points, one each.
        let empties: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        let mut taken: Vec<usize> = Vec::new();
        for j in empties {
            let mut far = (usize::MAX, f64::NEG_INFINITY);
            for i in 0..n {
                if taken.contains(&i) {
                    continue;
                }
                let dist = sq_dist(points.row_slice(i), centroids.row_slice(labels[i]));
                if dist > far.1 {
                    far = (i, dist);
                }
            }
            if far.1 > 0.0 {
                let row = points.row_slice(far.0).to_vec();
                centroids.data_mut()[j * d..(j + 1) * d].copy_from_slice(&row);
                taken.push(far.0);
            }
        }

        let prev = labels.clone();
        inertia = assign(&centroids, &mut labels);
        trace.push(inertia);
        if labels == prev {
            break;
        }
    }

    KmeansFit { centroids, labels, inertia, inertia_trace: trace, restart }
}

/// k-means++: first centroid uniform, the rest sampled proportional to the
/// squared distance to the nearest already-chosen centroid.
fn plus_plus_seed(points: &Array, k: usize, rng: &mut impl Rng) -> Array {
    let (n, d) = points.shape();
    let mut centroids = Array::zeros(k, d);
    let first = rng.gen_range(0..n);
    centroids.data_mut()[..d].copy_from_slice(points.row_slice(first));

    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row_slice(i), &centroids.data()[..d]))
        .collect();
    for j in 1..k {
        let total: f64 = min_d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let row = points.row_slice(chosen).to_vec();
        centroids.data_mut()[j * d..(j + 1) * d].copy_from_slice(&row);
        for i in 0..n {
            let dist = sq_dist(points.row_slice(i), &row);
            if dist < min_d2[i] {
                min_d2[i] = dist;
            }
        }
    }
    centroids
}

/// Student-t (one degree of freedom) soft assignments:
/// `q_ij = (1 + ||x_i - mu_j||^2)^-1`, normalized over clusters.
pub fn soft_assign(embeddings: &Array, centroids: &Array) -> Result<Array> {
    let (n, d) = embeddings.shape();
    let (k, dc) = centroids.shape();
    if d != dc || k == 0 {
        return Err(Error::shape("soft_assign", format!("embeddings {d}-d vs centroids {dc}-d")));
    }
    let mut q = Array::zeros(n, k);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..k {
            let u = 1.0 / (1.0 + sq_dist(embeddings.row_slice(i), centroids.row_slice(j)));
            q.set(i, j, u);
            row_sum += u;
        }
        for j in 0..k {
            let v = q.get(i, j) / row_sum;
            q.set(i, j, v);
        }
    }
    Ok(q)
}

/// Self-sharpening target: `p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j')`
/// with cluster frequencies `f_j = sum_i q_ij`.
pub fn target_dist(q: &Array) -> Result<Array> {
    let (n, k) = q.shape();
    let mut f = vec![0.0f64; k];
    for i in 0..n {
        for (j, fj) in f.iter_mut().enumerate() {
            *fj += q.get(i, j);
        }
    }
    if let Some(j) = f.iter().position(|&fj| !(fj > 0.0)) {
        return Err(Error::numeric(format!("soft cluster {j} has zero total mass")));
    }
    let mut p = Array::zeros(n, k);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..k {
            let v = q.get(i, j) * q.get(i, j) / f[j];
            p.set(i, j, v);
            row_sum += v;
        }
        for j in 0..k {
            let v = p.get(i, j) / row_sum;
            p.set(i, j, v);
        }
    }
    Ok(p)
}

/// `KL(P || Q)` averaged over rows, `0 ln 0 = 0`.
pub fn kl_loss(p: &Array, q: &Array) -> Result<f64> {
    if p.shape() != q.shape() || p.rows() == 0 {
        return Err(Error::shape("kl_loss", format!("{:?} vs {:?}", p.shape(), q.shape())));
    }
    let mut total = 0.0;
    for (i, (&pv, &qv)) in p.data().iter().zip(q.data()).enumerate() {
        if pv == 0.0 {
            continue;
        }
        if !(qv > 0.0) {
            return Err(Error::numeric(format!(
                "kl_loss: q = {qv} where p = {pv} at flat index {i}"
            )));
        }
        total += pv * (pv / qv).ln();
    }
    Ok(total / p.rows() as f64)
}

/// Hard assignment by Euclidean distance; returns `(label, distance)`.
/// The argmax of the student-t soft assignment is the same label.
pub fn assign_nearest(x: &[f64], centroids: &Array) -> Result<(usize, f64)> {
    if centroids.rows() == 0 || x.len() != centroids.cols() {
        return Err(Error::shape(
            "assign_nearest",
            format!("{}-d point vs {:?} centroids", x.len(), centroids.shape()),
        ));
    }
    let (j, d2) = nearest(x, centroids);
    Ok((j, d2.sqrt()))
}

/// Adjusted Rand index between two labelings of the same items. 1 is perfect
/// agreement up to label permutation, 0 is chance level.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::validation(format!(
            "adjusted_rand_index on {} vs {} labels",
            a.len(),
            b.len()
        )));
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&m| c2(m)).sum();
    let row_sum: f64 = rows.iter().map(|&m| c2(m)).sum();
    let col_sum: f64 = cols.iter().map(|&m| c2(m)).sum();
    let expected = row_sum * col_sum / c2(a.len() as u64);
    let max_index = 0.5 * (row_sum + col_sum);
    if (max_index - expected).abs() < 1e-12 {
        // Degenerate partitions (e.g. both single-cluster): agreement is
        // exact when the index matches its expectation.
        return Ok(if (index - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max_index - expected))
}

/// Greedy one-to-one matching of `new` centroid rows onto `reference` rows by
/// squared distance. Returns `perm` with `perm[new_row] = reference_row`.
pub fn match_centroids(new: &Array, reference: &Array) -> Result<Vec<usize>> {
    if new.shape() != reference.shape() {
        return Err(Error::shape(
            "match_centroids",
            format!("{:?} vs {:?}", new.shape(), reference.shape()),
        ));
    }
    let k = new.rows();
    let mut perm = vec![usize::MAX; k];
    let mut used_new = vec![false; k];
    let mut used_ref = vec![false; k];
    for _ in 0..k {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for i in 0..k {
            if used_new[i] {
                continue;
            }
            for j in 0..k {
                if used_ref[j] {
                    continue;
                }
                let dist = sq_dist(new.row_slice(i), reference.row_slice(j));
                if dist < best.0 {
                    best = (dist, i, j);
                }
            }
        }
        let (_, i, j) = best;
        perm[i] = j;
        used_new[i] = true;
        used_ref[j] = true;
    }
    Ok(perm)
}
