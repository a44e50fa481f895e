//! Throwaway diagnostic: ARI of k-means on pretrained embeddings vs planted.
use std::collections::BTreeMap;

use dtic_core::cli::CohortFile;
use dtic_core::clustering::{kmeans, KmeansOpts};
use dtic_core::model::ModelFile;
use dtic_core::pipeline::{embed_cohort, PreparedCohort};

fn ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut cont: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cont.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let sij: f64 = cont.values().map(|&c| c2(c)).sum();
    let sa: f64 = ra.values().map(|&c| c2(c)).sum();
    let sb: f64 = rb.values().map(|&c| c2(c)).sum();
    let exp = sa * sb / c2(n as f64);
    (sij - exp) / (0.5 * (sa + sb) - exp)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = ModelFile::load(args[1].as_ref()).unwrap();
    let cohort = CohortFile::load(args[2].as_ref()).unwrap();
    let mut planted: BTreeMap<String, usize> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(&args[3]).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        planted.insert(rec[0].to_string(), rec[1].parse().unwrap());
    }
    let mp = model.build_params().unwrap();
    let pc = PreparedCohort::prepare(cohort.encounters.clone(), model.config.grid_len).unwrap();
    let emb = embed_cohort(&mp, &pc, 4).unwrap();
    let truth: Vec<usize> = pc.encounters.iter().map(|pe| planted[&pe.enc.id]).collect();
    for k in [4usize] {
        let fit = kmeans(&emb, &KmeansOpts { k, restarts: 10, max_iter: 100, seed: 99 }).unwrap();
        println!("k={k} kmeans-on-embeddings ARI = {:.4}", ari(&fit.labels, &truth));
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in &fit.labels { *sizes.entry(l).or_default() += 1; }
        println!("  sizes {:?}", sizes);
    }
    // embedding spread: mean norm and per-dim sd
    let n = emb.rows();
    let h = emb.cols();
    let mut mean = vec![0.0; h];
    for i in 0..n { for (m, v) in mean.iter_mut().zip(emb.row_slice(i)) { *m += v; } }
    for m in &mut mean { *m /= n as f64; }
    let mut var = vec![0.0; h];
    for i in 0..n { for d in 0..h { let c = emb.row_slice(i)[d] - mean[d]; var[d] += c * c; } }
    for v in &mut var { *v /= n as f64; }
    let total: f64 = var.iter().sum();
    let mut sorted = var.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top: f64 = sorted.iter().take(4).sum();
    println!("embedding dims={h} total var {total:.4}; top-4 dims carry {:.1}%", 100.0 * top / total);
}
