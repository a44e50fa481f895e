//! Throwaway diagnostic: what separates the k=5 split inside one archetype?
use dtic_core::cli::CohortFile;
use dtic_core::clustering::{kmeans, KmeansOpts};
use dtic_core::interpnet::{interpolate_encounter, ReferenceGrid};
use dtic_core::model::ModelFile;
use dtic_core::pipeline::{embed_cohort, PreparedCohort};

struct Feat {
    max_chi: f64,
    max_tau: f64,
    artifact_cells: usize,
    total_pts: usize,
    min_series_pts: usize,
    max_gap: f64,
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = ModelFile::load(args[1].as_ref()).unwrap();
    let cohort = CohortFile::load(args[2].as_ref()).unwrap();
    let mp = model.build_params().unwrap();
    let iv = mp.interp_values();
    let grid = ReferenceGrid::uniform(model.config.grid_len).unwrap();

    let feats: Vec<Feat> = cohort
        .encounters
        .iter()
        .map(|enc| {
            let rep = interpolate_encounter(enc, &grid, &iv).unwrap();
            let (mut mc, mut mt, mut art) = (0f64, 0f64, 0usize);
            for k in 0..rep.rows() {
                for d in 0..6 {
                    let chi = rep.get(k, d).abs();
                    mc = mc.max(chi);
                    if chi > 3.0 {
                        art += 1;
                    }
                    mt = mt.max(rep.get(k, 6 + d).abs());
                }
            }
            let pts: Vec<usize> = enc.series.iter().map(|s| s.points.len()).collect();
            let mut gap = 0f64;
            for s in &enc.series {
                let mut prev = 0.0;
                for &(t, _) in &s.points {
                    gap = gap.max(t - prev);
                    prev = t;
                }
                gap = gap.max(360.0 - prev);
            }
            Feat {
                max_chi: mc,
                max_tau: mt,
                artifact_cells: art,
                total_pts: pts.iter().sum(),
                min_series_pts: *pts.iter().min().unwrap(),
                max_gap: gap,
            }
        })
        .collect();

    let pc = PreparedCohort::prepare(cohort.encounters.clone(), model.config.grid_len).unwrap();
    let emb = embed_cohort(&mp, &pc, 4).unwrap();
    let fit = kmeans(&emb, &KmeansOpts { k: 5, restarts: 10, max_iter: 100, seed: 42 }).unwrap();

    // The archetype blocks are 500 apart; find the block split across two k=5 labels.
    let arch = |i: usize| i / 500;
    for a in 0..4 {
        let mut by_label = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for (i, &l) in fit.labels.iter().enumerate() {
            if arch(i) == a {
                by_label.entry(l).or_default().push(i);
            }
        }
        let counts: Vec<(usize, usize)> = by_label.iter().map(|(l, v)| (*l, v.len())).collect();
        println!("archetype {a}: k=5 label counts {counts:?}");
        if by_label.len() < 2 {
            continue;
        }
        for (l, idxs) in &by_label {
            if idxs.len() < 20 {
                continue;
            }
            let n = idxs.len() as f64;
            let mean = |f: &dyn Fn(usize) -> f64| idxs.iter().map(|&i| f(i)).sum::<f64>() / n;
            let mc = mean(&|i| feats[i].max_chi);
            let frac_art = mean(&|i| (feats[i].max_chi > 3.0) as u8 as f64);
            let art = mean(&|i| feats[i].artifact_cells as f64);
            let mt = mean(&|i| feats[i].max_tau);
            let tp = mean(&|i| feats[i].total_pts as f64);
            let msp = mean(&|i| feats[i].min_series_pts as f64);
            let mg = mean(&|i| feats[i].max_gap);
            println!(
                "  label {l} n={} mean max|chi| {mc:.2} frac(max|chi|>3) {frac_art:.3} \
                 artifact_cells {art:.2} max|tau| {mt:.2} pts {tp:.1} min_series {msp:.2} \
                 max_gap {mg:.1}",
                idxs.len()
            );
            // per-dim embedding means to see which axes separate
            let h = emb.cols();
            let dims: Vec<f64> = (0..h)
                .map(|d| idxs.iter().map(|&i| emb.get(i, d)).sum::<f64>() / n)
                .collect();
            println!(
                "    emb means: {:?}",
                dims.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
    }
}
