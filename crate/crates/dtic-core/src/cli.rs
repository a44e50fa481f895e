//! Command-line surface: composable pipeline stages with explicit artifact
//! files. Every stage is deterministic given its inputs and `--seed`; all
//! parallelism stays behind `--threads` (default 1).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{LogRow, ModelFile, ModelParams};
use crate::pipeline::{assign_cohort, embed_cohort, PreparedCohort};
use crate::timeseries::{
    clean_encounter, fit_scaler, generate_synthetic_cohort, impute_empty_series, is_eligible,
    parse_cohort_csv, resample_5min, scale_encounter, write_cohort_csv, CleanCounts, Encounter,
    ScalerStats, SynthSpec, Variable, VariableRanges,
};
use crate::trainer::{joint_train, pretrain};

pub const COHORT_FORMAT_VERSION: u32 = 1;

/// Preprocessed cohort artifact: eligible encounters, already imputed and
/// scaled, plus everything needed to treat new data the same way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortFile {
    pub format_version: u32,
    pub ranges: VariableRanges,
    pub scaler: ScalerStats,
    pub encounters: Vec<Encounter>,
}

impl CohortFile {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != COHORT_FORMAT_VERSION {
            return Err(Error::validation(format!(
                "cohort format version {} (expected {COHORT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.ranges.validate()?;
        self.scaler.validate()?;
        for enc in &self.encounters {
            enc.validate()?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: CohortFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        file.validate()?;
        Ok(file)
    }
}

/// What preprocessing did, encounter by encounter and variable by variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows: u64,
    pub bad_rows: u64,
    pub duplicate_rows: u64,
    pub encounters_in: usize,
    /// Outlier observations dropped, per variable (canonical order).
    pub dropped_outliers: BTreeMap<String, u64>,
    /// Excluded encounters and how many model-window series were empty.
    pub ineligible: Vec<(String, usize)>,
    pub encounters_out: usize,
    pub imputed_series: u64,
    pub scaler: ScalerStats,
}

impl PreprocessReport {
    pub fn summary(&self) -> String {
        let dropped: u64 = self.dropped_outliers.values().sum();
        format!(
            "parsed {} rows ({} bad, {} duplicate); {} encounters in, \
             {} dropped outlier observations, {} ineligible encounters, \
             {} imputed series, {} encounters out",
            self.rows,
            self.bad_rows,
            self.duplicate_rows,
            self.encounters_in,
            dropped,
            self.ineligible.len(),
            self.imputed_series,
            self.encounters_out
        )
    }
}

/// Clean, drop ineligible encounters, impute, and scale. When `scaler` is
/// `None` the scaler is fit on this cohort (post-clean, pre-impute);
/// otherwise the given stats are applied unchanged (held-out data).
pub fn preprocess_encounters(
    mut cohort: Vec<Encounter>,
    ranges: &VariableRanges,
    scaler: Option<&ScalerStats>,
) -> Result<(CohortFile, PreprocessReport)> {
    let encounters_in = cohort.len();
    let mut dropped = CleanCounts::default();
    for enc in &mut cohort {
        dropped.merge(&clean_encounter(enc, ranges));
    }
    let mut ineligible = Vec::new();
    cohort.retain(|enc| {
        if is_eligible(enc) {
            true
        } else {
            ineligible.push((enc.id.clone(), enc.empty_series_count()));
            false
        }
    });
    let stats = match scaler {
        Some(s) => s.clone(),
        None => fit_scaler(&cohort),
    };
    let mut imputed_series = 0u64;
    for enc in &mut cohort {
        imputed_series += impute_empty_series(enc, ranges) as u64;
        scale_encounter(enc, &stats);
    }
    let mut dropped_outliers = BTreeMap::new();
    for v in Variable::ALL {
        dropped_outliers.insert(v.name().to_string(), dropped.dropped[v.index()]);
    }
    let report = PreprocessReport {
        rows: 0,
        bad_rows: 0,
        duplicate_rows: 0,
        encounters_in,
        dropped_outliers,
        ineligible,
        encounters_out: cohort.len(),
        imputed_series,
        scaler: stats.clone(),
    };
    let file = CohortFile {
        format_version: COHORT_FORMAT_VERSION,
        ranges: ranges.clone(),
        scaler: stats,
        encounters: cohort,
    };
    Ok((file, report))
}

#[derive(Debug, Parser)]
#[command(name = "dtic", version, about = "Vital-sign phenotype discovery pipeline")]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// Root seed; all randomness derives from it through named streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for cohort-wide passes.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a synthetic cohort CSV with planted archetype labels.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Synthetic-cohort spec JSON; defaults to the built-in 4 archetypes.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output cohort CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional planted-label CSV (encounter_id,label).
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Clean, filter, impute, and scale a raw cohort CSV.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Raw cohort CSV (encounter_id,variable,t_minutes,value).
        #[arg(long)]
        input: PathBuf,
        /// Output cohort JSON.
        #[arg(long)]
        out: PathBuf,
        /// Ranges JSON overriding the built-in limits.
        #[arg(long)]
        ranges: Option<PathBuf>,
        /// Run-config JSON (only max_bad_row_fraction applies here).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional JSON exclusion report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Pass one: fit the embedding model on a preprocessed cohort.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Preprocessed cohort JSON.
        #[arg(long)]
        cohort: PathBuf,
        /// Output model JSON.
        #[arg(long)]
        out: PathBuf,
        /// Run-config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional training-log CSV.
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Pass two: joint cluster refinement on a pretrained model.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Pretrained model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Preprocessed cohort JSON (the training cohort).
        #[arg(long)]
        cohort: PathBuf,
        /// Number of phenotypes.
        #[arg(long)]
        k: usize,
        /// Output model JSON.
        #[arg(long)]
        out: PathBuf,
        /// Optional training-cohort labels CSV (encounter_id,phenotype,distance).
        #[arg(long)]
        labels_out: Option<PathBuf>,
        /// Optional training-log CSV.
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Profile cluster-validity statistics over a range of k.
    SelectK {
        #[command(flatten)]
        common: Common,
        /// Pretrained model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Preprocessed cohort JSON.
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        /// Output report CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign raw encounters to phenotypes by nearest centroid.
    Assign {
        #[command(flatten)]
        common: Common,
        /// Clustered model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Raw cohort CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output assignments CSV (encounter_id,phenotype,distance).
        #[arg(long)]
        out: PathBuf,
    },
    /// Export 5-minute binned trajectories per phenotype for plotting.
    ExportPlots {
        #[command(flatten)]
        common: Common,
        /// Raw cohort CSV.
        #[arg(long)]
        input: PathBuf,
        /// Assignments CSV (encounter_id,phenotype[,distance]).
        #[arg(long)]
        labels: PathBuf,
        /// Ranges JSON overriding the built-in limits.
        #[arg(long)]
        ranges: Option<PathBuf>,
        /// Output plot-data CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run the CLI; returns the process exit code (0 ok, 2 validation, 3 numeric).
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::from_json(&fs::read_to_string(p)?),
    }
}

fn load_ranges(path: &Option<PathBuf>) -> Result<VariableRanges> {
    match path {
        None => Ok(VariableRanges::default()),
        Some(p) => VariableRanges::from_json(&fs::read_to_string(p)?),
    }
}

fn float_field(v: f64) -> String {
    format!("{v}")
}

fn write_labels_csv(path: &Path, rows: &[(String, usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(fs::File::create(path)?);
    w.write_record(["encounter_id", "phenotype", "distance"])?;
    for (id, phen, dist) in rows {
        w.write_record([id.as_str(), &phen.to_string(), &float_field(*dist)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_labels_csv(path: &Path) -> Result<BTreeMap<String, usize>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(fs::File::open(path)?);
    {
        let headers = r.headers()?;
        if headers.len() < 2 || &headers[0] != "encounter_id" || &headers[1] != "phenotype" {
            return Err(Error::validation(format!(
                "labels CSV must start with encounter_id,phenotype (found {:?})",
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }
    let mut labels = BTreeMap::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let id = record
            .get(0)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Parse { line: line as u64, message: "empty encounter id".into() })?;
        let phen: usize = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse { line: line as u64, message: "bad phenotype".into() })?;
        if labels.insert(id.to_string(), phen).is_some() {
            return Err(Error::Parse {
                line: line as u64,
                message: format!("duplicate encounter id {id}"),
            });
        }
    }
    Ok(labels)
}

fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(fs::File::create(path)?);
    w.write_record([
        "iter",
        "loss_total",
        "loss_recon",
        "loss_reg",
        "loss_bce",
        "loss_kl",
        "label_change_frac",
    ])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            float_field(r.loss_total),
            float_field(r.loss_recon),
            float_field(r.loss_reg),
            float_field(r.loss_bce),
            float_field(r.loss_kl),
            r.label_change_frac.map(float_field).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelFile, ModelParams)> {
    let file = ModelFile::load(path)?;
    let params = file.build_params()?;
    Ok((file, params))
}

fn prepared_from_cohort(file: &CohortFile, cfg: &RunConfig) -> Result<PreparedCohort> {
    PreparedCohort::prepare(file.encounters.clone(), cfg.grid_len)
}

/// Best-effort checkpoint next to `out` when training aborts on a numeric
/// error; the parameters are finite (updates validate gradients first), only
/// the latest forward pass blew up.
fn save_abort_checkpoint(out: &Path, file: &ModelFile) {
    let path = out.with_extension("aborted.json");
    match file.save(&path) {
        Ok(()) => eprintln!("wrote last-good checkpoint to {}", path.display()),
        Err(e) => eprintln!("could not write checkpoint: {e}"),
    }
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { common, spec, out, labels_out } => {
            let spec = match spec {
                None => SynthSpec::default(),
                Some(p) => SynthSpec::from_json(&fs::read_to_string(p)?)?,
            };
            let cohort = generate_synthetic_cohort(&spec, common.seed)?;
            write_cohort_csv(&cohort, fs::File::create(&out)?)?;
            if let Some(lp) = labels_out {
                let mut w = csv::Writer::from_writer(fs::File::create(&lp)?);
                w.write_record(["encounter_id", "label"])?;
                for enc in &cohort {
                    let label = enc.planted_label.expect("synthetic cohorts carry labels");
                    w.write_record([enc.id.as_str(), &label.to_string()])?;
                }
                w.flush()?;
            }
            println!("wrote {} synthetic encounters to {}", cohort.len(), out.display());
            Ok(())
        }
        Cmd::Preprocess { common: _, input, out, ranges, config, report } => {
            let cfg = load_config(&config)?;
            let ranges = load_ranges(&ranges)?;
            let (cohort, parse_report) =
                parse_cohort_csv(fs::File::open(&input)?, cfg.max_bad_row_fraction)?;
            let (file, mut rep) = preprocess_encounters(cohort, &ranges, None)?;
            rep.rows = parse_report.rows;
            rep.bad_rows = parse_report.bad_rows.len() as u64;
            rep.duplicate_rows = parse_report.duplicate_rows;
            file.save(&out)?;
            if let Some(rp) = report {
                fs::write(&rp, serde_json::to_string_pretty(&rep)?)?;
            }
            println!("{}", rep.summary());
            Ok(())
        }
        Cmd::Pretrain { common, cohort, out, config, log_out } => {
            let cfg = load_config(&config)?;
            let cohort_file = CohortFile::load(&cohort)?;
            let pc = prepared_from_cohort(&cohort_file, &cfg)?;
            let mut mp = ModelParams::init(&cfg, common.seed)?;
            let log = match pretrain(&mut mp, &pc, &cfg, common.seed) {
                Ok(log) => log,
                Err(e) => {
                    let file = ModelFile::new(
                        &mp,
                        cfg.clone(),
                        cohort_file.ranges.clone(),
                        cohort_file.scaler.clone(),
                    );
                    save_abort_checkpoint(&out, &file);
                    return Err(e);
                }
            };
            let mut file =
                ModelFile::new(&mp, cfg, cohort_file.ranges.clone(), cohort_file.scaler.clone());
            file.train_log = log;
            file.save(&out)?;
            if let Some(lp) = log_out {
                write_log_csv(&lp, &file.train_log)?;
            }
            let last = file.train_log.last().expect("at least one iteration");
            println!(
                "pretrained {} iterations; final loss {:.6} (recon {:.6}, reg {:.6}, bce {:.6})",
                last.iter, last.loss_total, last.loss_recon, last.loss_reg, last.loss_bce
            );
            file.validate()
        }
        Cmd::Cluster { common, model, cohort, k, out, labels_out, log_out } => {
            let (mut file, mut mp) = load_model(&model)?;
            if file.k.is_some() {
                return Err(Error::validation("model is already clustered"));
            }
            let cohort_file = CohortFile::load(&cohort)?;
            let pc = prepared_from_cohort(&cohort_file, &file.config)?;
            let outcome =
                match joint_train(&mut mp, &pc, &file.config, k, common.seed, common.threads) {
                    Ok(o) => o,
                    Err(e) => {
                        let mut ck = file.clone();
                        ck.params = mp.named_arrays();
                        save_abort_checkpoint(&out, &ck);
                        return Err(e);
                    }
                };
            file.params = mp.named_arrays();
            file.k = Some(k);
            file.centroids = Some(outcome.centroids.clone());
            file.train_log.extend(outcome.log.iter().cloned());
            file.save(&out)?;
            if let Some(lp) = log_out {
                write_log_csv(&lp, &outcome.log)?;
            }
            if let Some(lp) = labels_out {
                let emb = embed_cohort(&mp, &pc, common.threads)?;
                let assigned = assign_cohort(&emb, &outcome.centroids)?;
                let rows: Vec<(String, usize, f64)> = pc
                    .encounters
                    .iter()
                    .zip(&assigned)
                    .map(|(pe, &(phen, dist))| (pe.enc.id.clone(), phen, dist))
                    .collect();
                write_labels_csv(&lp, &rows)?;
            }
            println!(
                "clustered into {k} phenotypes in {} joint iterations \
                 (stopped early: {}); k-means/soft-assignment agreement {:.4}",
                outcome.log.len(),
                outcome.stopped_by_delta,
                outcome.agreement
            );
            Ok(())
        }
        Cmd::SelectK { common, model, cohort, k_min, k_max, out } => {
            if k_min < 2 || k_max < k_min {
                return Err(Error::validation(format!("bad k range {k_min}..={k_max}")));
            }
            let (file, mp) = load_model(&model)?;
            let cohort_file = CohortFile::load(&cohort)?;
            let pc = prepared_from_cohort(&cohort_file, &file.config)?;
            let emb = embed_cohort(&mp, &pc, common.threads)?;
            let ks: Vec<usize> = (k_min..=k_max).collect();
            let opts = crate::modelsel::KReportOpts {
                restarts: file.config.restarts,
                gap_refs: file.config.gap_refs,
                min_size_frac: file.config.min_size_frac,
                seed: common.seed,
            };
            let report = crate::modelsel::k_report(&emb, &ks, &opts)?;
            report.write_csv(fs::File::create(&out)?)?;
            print!("{}", report.render_text());
            Ok(())
        }
        Cmd::Assign { common, model, input, out } => {
            let (file, mp) = load_model(&model)?;
            let centroids = file
                .centroids
                .clone()
                .ok_or_else(|| Error::validation("model has no centroids; run cluster first"))?;
            let (raw, _parse_report) =
                parse_cohort_csv(fs::File::open(&input)?, file.config.max_bad_row_fraction)?;
            let (prepared, rep) =
                preprocess_encounters(raw, &file.ranges, Some(&file.scaler))?;
            if !rep.ineligible.is_empty() {
                eprintln!("skipped {} ineligible encounters", rep.ineligible.len());
            }
            let pc = prepared_from_cohort(&prepared, &file.config)?;
            let emb = embed_cohort(&mp, &pc, common.threads)?;
            let assigned = assign_cohort(&emb, &centroids)?;
            let rows: Vec<(String, usize, f64)> = pc
                .encounters
                .iter()
                .zip(&assigned)
                .map(|(pe, &(phen, dist))| (pe.enc.id.clone(), phen, dist))
                .collect();
            write_labels_csv(&out, &rows)?;
            println!("assigned {} encounters to {} phenotypes", rows.len(), centroids.rows());
            Ok(())
        }
        Cmd::ExportPlots { common: _, input, labels, ranges, out } => {
            let ranges = load_ranges(&ranges)?;
            let labels = read_labels_csv(&labels)?;
            let (mut cohort, _) = parse_cohort_csv(fs::File::open(&input)?, 0.01)?;
            for enc in &mut cohort {
                clean_encounter(enc, &ranges);
            }
            let before = cohort.len();
            cohort.retain(|enc| labels.contains_key(&enc.id));
            if cohort.len() < before {
                eprintln!("ignoring {} unlabeled encounters", before - cohort.len());
            }
            let stats = resample_5min(&cohort, &labels)?;
            let mut w = csv::Writer::from_writer(fs::File::create(&out)?);
            w.write_record([
                "phenotype",
                "variable",
                "bin_start_min",
                "mean",
                "ci_lo",
                "ci_hi",
                "n",
            ])?;
            for s in &stats {
                w.write_record([
                    s.phenotype.to_string(),
                    s.variable.name().to_string(),
                    float_field(s.bin_start_min),
                    float_field(s.mean),
                    float_field(s.ci_lo),
                    float_field(s.ci_hi),
                    s.n.to_string(),
                ])?;
            }
            w.flush()?;
            println!("wrote {} bins to {}", stats.len(), out.display());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::make_encounter;

    #[test]
    fn preprocess_encounters_pipeline_order() {
        // raw native-unit encounters: one eligible, one with two empty series
        let ranges = VariableRanges::default();
        let plausible = [(110.0, 130.0), (60.0, 80.0), (70.0, 95.0), (36.0, 38.0), (92.0, 99.0), (12.0, 20.0)];
        let mut a = Encounter::empty("a");
        for v in Variable::ALL {
            let (lo, hi) = plausible[v.index()];
            a.series[v.index()].points = vec![(5.0, lo), (200.0, hi)];
        }
        // out-of-range SBP observation must drop before anything else
        a.series[0].points.push((300.0, 400.0));
        let mut b = Encounter::empty("b");
        b.series[0].points = vec![(10.0, 120.0)];
        b.series[1].points = vec![(10.0, 70.0)];
        b.series[2].points = vec![(10.0, 80.0)];
        b.series[3].points = vec![(10.0, 37.0)];
        // SPO2 and RR empty -> ineligible
        let (file, rep) = preprocess_encounters(vec![a, b], &ranges, None).unwrap();
        assert_eq!(rep.encounters_in, 2);
        assert_eq!(rep.encounters_out, 1);
        assert_eq!(rep.ineligible, vec![("b".to_string(), 2)]);
        assert_eq!(rep.dropped_outliers["SBP"], 1);
        assert_eq!(rep.imputed_series, 0);
        assert_eq!(file.encounters.len(), 1);
        // every surviving value is scaled into [0,1]
        for enc in &file.encounters {
            for s in &enc.series {
                for &(_, v) in &s.points {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn preprocess_with_fixed_scaler_does_not_refit() {
        let ranges = VariableRanges::default();
        let mut enc = Encounter::empty("x");
        for v in Variable::ALL {
            enc.series[v.index()].variable = v;
            enc.series[v.index()].points = vec![(5.0, 50.0), (100.0, 60.0)];
        }
        let fixed = ScalerStats { min: [0.0; 6], max: [100.0; 6] };
        let (file, rep) = preprocess_encounters(vec![enc], &ranges, Some(&fixed)).unwrap();
        assert_eq!(rep.scaler, fixed);
        assert_eq!(file.encounters[0].series[0].points[0].1, 0.5);
        assert_eq!(file.encounters[0].series[0].points[1].1, 0.6);
    }

    #[test]
    fn cohort_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cohort.json");
        let file = CohortFile {
            format_version: COHORT_FORMAT_VERSION,
            ranges: VariableRanges::default(),
            scaler: ScalerStats::identity(),
            encounters: vec![make_encounter("e0", 0.0)],
        };
        file.save(&path).unwrap();
        let back = CohortFile::load(&path).unwrap();
        assert_eq!(back.encounters[0].id, "e0");
        assert_eq!(back.encounters[0].series, file.encounters[0].series);
        // version mismatch refuses to load
        let mut wrong = file.clone();
        wrong.format_version = 99;
        assert!(wrong.validate().is_err());
    }

    #[test]
    fn labels_csv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let rows =
            vec![("a".to_string(), 0usize, 1.5f64), ("b".to_string(), 2, 0.25)];
        write_labels_csv(&path, &rows).unwrap();
        let map = read_labels_csv(&path).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["a"], 0);
        assert_eq!(map["b"], 2);
        fs::write(&path, "wrong,header\n1,2\n").unwrap();
        assert!(read_labels_csv(&path).is_err());
    }

    #[test]
    fn log_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let rows = vec![
            LogRow {
                phase: "pretrain".into(),
                iter: 1,
                loss_total: 1.5,
                loss_recon: 1.0,
                loss_reg: 0.25,
                loss_bce: 0.25,
                loss_kl: 0.0,
                label_change_frac: None,
            },
            LogRow {
                phase: "joint".into(),
                iter: 2,
                loss_total: 1.25,
                loss_recon: 0.875,
                loss_reg: 0.125,
                loss_bce: 0.125,
                loss_kl: 0.125,
                label_change_frac: Some(0.5),
            },
        ];
        write_log_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,loss_total,loss_recon,loss_reg,loss_bce,loss_kl,label_change_frac"
        );
        assert_eq!(lines.next().unwrap(), "1,1.5,1,0.25,0.25,0,");
        assert_eq!(lines.next().unwrap(), "2,1.25,0.875,0.125,0.125,0.125,0.5");
    }
}
