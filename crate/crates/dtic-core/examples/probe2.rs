//! Throwaway diagnostic: chi blowup scan with trained parameters.
use dtic_core::cli::CohortFile;
use dtic_core::clustering::{kmeans, KmeansOpts};
use dtic_core::interpnet::{interpolate_encounter, ReferenceGrid};
use dtic_core::model::ModelFile;
use dtic_core::pipeline::{embed_cohort, PreparedCohort};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = ModelFile::load(args[1].as_ref()).unwrap();
    let cohort = CohortFile::load(args[2].as_ref()).unwrap();
    let mp = model.build_params().unwrap();
    let iv = mp.interp_values();
    println!("alpha: {:?}", iv.alpha);
    println!("rho rows:");
    for r in &iv.rho {
        println!("  {:?}", r.map(|x| (x * 1000.0).round() / 1000.0));
    }
    let grid = ReferenceGrid::uniform(model.config.grid_len).unwrap();
    // per-encounter max |chi|
    let mut worst: Vec<(f64, String, usize)> = cohort
        .encounters
        .iter()
        .map(|enc| {
            let rep = interpolate_encounter(enc, &grid, &iv).unwrap();
            let mut m = 0f64;
            for k in 0..rep.rows() {
                for d in 0..6 {
                    m = m.max(rep.get(k, d).abs());
                }
            }
            let nobs: usize = enc.series.iter().map(|s| s.points.len()).sum();
            (m, enc.id.clone(), nobs)
        })
        .collect();
    worst.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("max |chi| top10: {:?}", &worst[..10]);
    let med = worst[worst.len() / 2].0;
    println!("median max|chi| = {med:.4}");

    // are the k=5 tiny-cluster members the same encounters?
    let pc = PreparedCohort::prepare(cohort.encounters.clone(), model.config.grid_len).unwrap();
    let emb = embed_cohort(&mp, &pc, 4).unwrap();
    let fit = kmeans(&emb, &KmeansOpts { k: 5, restarts: 10, max_iter: 100, seed: 42 }).unwrap();
    let mut sizes = std::collections::BTreeMap::new();
    for &l in &fit.labels { *sizes.entry(l).or_insert(0usize) += 1; }
    let tiny = *sizes.iter().min_by_key(|(_, &c)| c).unwrap().0;
    let ids: Vec<&str> = pc
        .encounters
        .iter()
        .zip(&fit.labels)
        .filter(|(_, &l)| l == tiny)
        .map(|(pe, _)| pe.enc.id.as_str())
        .collect();
    println!("k=5 tiny cluster ({}): {:?}", ids.len(), ids);
}
