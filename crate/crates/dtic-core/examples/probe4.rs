//! Throwaway diagnostic: k-report on the artifact-free subset.
use dtic_core::autodiff::Array;
use dtic_core::cli::CohortFile;
use dtic_core::clustering::{kmeans, KmeansOpts};
use dtic_core::interpnet::{interpolate_encounter, ReferenceGrid};
use dtic_core::model::ModelFile;
use dtic_core::modelsel::{k_report, KReportOpts};
use dtic_core::pipeline::{embed_cohort, PreparedCohort};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = ModelFile::load(args[1].as_ref()).unwrap();
    let cohort = CohortFile::load(args[2].as_ref()).unwrap();
    let cut: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3.0);
    let mp = model.build_params().unwrap();
    let iv = mp.interp_values();
    let grid = ReferenceGrid::uniform(model.config.grid_len).unwrap();
    let keep: Vec<bool> = cohort
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
            m < cut
        })
        .collect();
    let pc = PreparedCohort::prepare(cohort.encounters.clone(), model.config.grid_len).unwrap();
    let emb = embed_cohort(&mp, &pc, 4).unwrap();
    let kept: Vec<usize> = (0..emb.rows()).filter(|&i| keep[i]).collect();
    println!("kept {} of {} (max|chi| < {cut})", kept.len(), emb.rows());
    let mut filtered = Array::zeros(kept.len(), emb.cols());
    for (r, &i) in kept.iter().enumerate() {
        for c in 0..emb.cols() {
            filtered.set(r, c, emb.get(i, c));
        }
    }
    let ks: Vec<usize> = (2..=6).collect();
    let opts = KReportOpts { restarts: 10, gap_refs: 10, min_size_frac: 0.01, seed: 42 };
    let report = k_report(&filtered, &ks, &opts).unwrap();
    print!("{}", report.render_text());
    match report.gap_k {
        Some(k) => println!("gap rule fires at k = {k}"),
        None => println!("gap rule satisfied by no profiled k"),
    }

    // per-blob geometry at k=4: W share, 2-means reduction, top eigenvalue share
    let fit = kmeans(&filtered, &KmeansOpts { k: 4, restarts: 10, max_iter: 100, seed: 42 }).unwrap();
    let h = filtered.cols();
    let mut w_total = 0.0;
    let mut blob_stats = Vec::new();
    for b in 0..4 {
        let rows: Vec<usize> = (0..filtered.rows()).filter(|&i| fit.labels[i] == b).collect();
        let mut blob = Array::zeros(rows.len(), h);
        for (r, &i) in rows.iter().enumerate() {
            for c in 0..h {
                blob.set(r, c, filtered.get(i, c));
            }
        }
        let centroid: Vec<f64> =
            (0..h).map(|c| rows.iter().map(|&i| filtered.get(i, c)).sum::<f64>() / rows.len() as f64).collect();
        let w: f64 = rows
            .iter()
            .map(|&i| (0..h).map(|c| (filtered.get(i, c) - centroid[c]).powi(2)).sum::<f64>())
            .sum();
        w_total += w;
        let split = kmeans(&blob, &KmeansOpts { k: 2, restarts: 10, max_iter: 100, seed: 7 }).unwrap();
        // variance along each dim, descending, for d_eff
        let mut vars: Vec<f64> = (0..h)
            .map(|c| {
                rows.iter().map(|&i| (filtered.get(i, c) - centroid[c]).powi(2)).sum::<f64>()
                    / rows.len() as f64
            })
            .collect();
        vars.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let var_sum: f64 = vars.iter().sum();
        let top1 = vars[0] / var_sum;
        let d_eff = var_sum * var_sum / vars.iter().map(|v| v * v).sum::<f64>();
        blob_stats.push((b, rows.len(), w, split.inertia / w, top1, d_eff));
    }
    for (b, n, w, r, top1, d_eff) in blob_stats {
        println!(
            "blob {b}: n={n} W={w:.1} share={:.3} split_keeps={r:.3} top1var={top1:.2} d_eff={d_eff:.1}",
            w / w_total
        );
    }
}
