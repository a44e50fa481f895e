//! Long-format CSV input and output.
//!
//! Input rows are `encounter_id,variable,t_minutes,value`. Bad rows are
//! collected with their line numbers; the parse aborts only when the bad-row
//! fraction exceeds a threshold. Observations split by timestamp: `[0, 360)`
//! feeds the model window, `[360, 420)` the next-hour label window.

use std::collections::BTreeMap;
use std::io;

use crate::error::{Error, Result};
use crate::timeseries::types::{Encounter, Variable, HORIZON_MIN, MODEL_WINDOW_MIN, N_VARS};

pub const EXPECTED_HEADER: [&str; 4] = ["encounter_id", "variable", "t_minutes", "value"];

/// Fraction of bad rows tolerated before the whole parse is rejected.
pub const DEFAULT_MAX_BAD_ROW_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub rows: u64,
    /// (1-based line, message) for every rejected row.
    pub bad_rows: Vec<(u64, String)>,
    /// Rows discarded because a later row repeated (encounter, variable, t).
    pub duplicate_rows: u64,
}

impl ParseReport {
    pub fn bad_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.bad_rows.len() as f64 / self.rows as f64
        }
    }
}

pub fn parse_cohort_csv(
    reader: impl io::Read,
    max_bad_fraction: f64,
) -> Result<(Vec<Encounter>, ParseReport)> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    {
        let headers = csv.headers()?;
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != EXPECTED_HEADER {
            return Err(Error::validation(format!(
                "expected header {:?}, got {:?}",
                EXPECTED_HEADER.join(","),
                got.join(",")
            )));
        }
    }

    // id -> per-variable raw (t, x) lists for each window.
    type RawSeries = [Vec<(f64, f64)>; N_VARS];
    let mut model: BTreeMap<String, RawSeries> = BTreeMap::new();
    let mut label: BTreeMap<String, RawSeries> = BTreeMap::new();
    let mut report = ParseReport::default();

    for record in csv.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        report.rows += 1;
        match parse_row(&record) {
            Ok((id, var, t, x)) => {
                let slot = if t < MODEL_WINDOW_MIN { &mut model } else { &mut label };
                slot.entry(id).or_insert_with(|| std::array::from_fn(|_| Vec::new()))
                    [var.index()]
                .push((t, x));
            }
            Err(msg) => report.bad_rows.push((line, msg)),
        }
    }

    if report.bad_fraction() > max_bad_fraction {
        let preview: Vec<String> = report
            .bad_rows
            .iter()
            .take(3)
            .map(|(line, msg)| format!("line {line}: {msg}"))
            .collect();
        return Err(Error::validation(format!(
            "{} of {} rows failed to parse (limit {:.2}%): {}",
            report.bad_rows.len(),
            report.rows,
            max_bad_fraction * 100.0,
            preview.join("; ")
        )));
    }

    let mut cohort = Vec::with_capacity(model.len());
    let mut ids: Vec<String> = model.keys().cloned().collect();
    for id in label.keys() {
        if !model.contains_key(id) {
            ids.push(id.clone());
        }
    }
    ids.sort();
    for id in ids {
        let mut enc = Encounter::empty(&id);
        if let Some(raw) = model.get_mut(&id) {
            for v in Variable::ALL {
                let pts = std::mem::take(&mut raw[v.index()]);
                enc.series[v.index()].points = sort_dedup_keep_last(pts, &mut report.duplicate_rows);
            }
        }
        if let Some(raw) = label.get_mut(&id) {
            for v in Variable::ALL {
                let pts = std::mem::take(&mut raw[v.index()]);
                enc.seventh_hour[v.index()].points =
                    sort_dedup_keep_last(pts, &mut report.duplicate_rows);
            }
        }
        enc.validate()?;
        cohort.push(enc);
    }
    Ok((cohort, report))
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<(String, Variable, f64, f64), String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, got {}", record.len()));
    }
    let id = record[0].trim();
    if id.is_empty() {
        return Err("empty encounter_id".into());
    }
    let var = Variable::parse(record[1].trim())
        .ok_or_else(|| format!("unknown variable `{}`", record[1].trim()))?;
    let t: f64 =
        record[2].trim().parse().map_err(|_| format!("bad t_minutes `{}`", record[2].trim()))?;
    if !t.is_finite() || !(0.0..HORIZON_MIN).contains(&t) {
        return Err(format!("t_minutes {t} outside [0, {HORIZON_MIN})"));
    }
    let x: f64 =
        record[3].trim().parse().map_err(|_| format!("bad value `{}`", record[3].trim()))?;
    if !x.is_finite() {
        return Err(format!("non-finite value {x}"));
    }
    Ok((id.to_string(), var, t, x))
}

/// Stable sort by time; among equal times the last input row wins.
fn sort_dedup_keep_last(mut pts: Vec<(f64, f64)>, dupes: &mut u64) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last_mut() {
            Some(last) if last.0 == p.0 => {
                *last = p;
                *dupes += 1;
            }
            _ => out.push(p),
        }
    }
    out
}

/// Write a cohort back to long format: encounters in order, variables in
/// canonical order, both windows, times ascending. Floats are formatted
/// shortest-round-trip so a parse of the output is bit-identical.
pub fn write_cohort_csv(cohort: &[Encounter], writer: impl io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EXPECTED_HEADER)?;
    for enc in cohort {
        for v in Variable::ALL {
            for &(t, x) in &enc.series[v.index()].points {
                w.write_record([enc.id.as_str(), v.name(), &format!("{t}"), &format!("{x}")])?;
            }
        }
        for v in Variable::ALL {
            for &(t, x) in &enc.seventh_hour[v.index()].points {
                w.write_record([enc.id.as_str(), v.name(), &format!("{t}"), &format!("{x}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const OK_CSV: &str = "\
encounter_id,variable,t_minutes,value
e2,HR,10,72
e1,SBP,0,120.5
e1,SBP,5.5,118
e1,HR,359.9,80
e1,SBP,400,110
";

    #[test]
    fn parses_and_routes_windows() {
        let (cohort, report) = parse_cohort_csv(OK_CSV.as_bytes(), 0.01).unwrap();
        assert_eq!(report.rows, 5);
        assert!(report.bad_rows.is_empty());
        assert_eq!(cohort.len(), 2);
        assert_eq!(cohort[0].id, "e1"); // sorted by id
        assert_eq!(cohort[0].series[Variable::Sbp.index()].points, vec![(0.0, 120.5), (5.5, 118.0)]);
        assert_eq!(cohort[0].series[Variable::Hr.index()].points, vec![(359.9, 80.0)]);
        assert_eq!(cohort[0].seventh_hour[Variable::Sbp.index()].points, vec![(400.0, 110.0)]);
        assert_eq!(cohort[1].id, "e2");
    }

    #[test]
    fn bad_rows_are_reported_with_lines() {
        let csv = "\
encounter_id,variable,t_minutes,value
e1,SBP,0,120
e1,XYZ,1,5
e1,SBP,nope,5
e1,SBP,-1,5
e1,SBP,420,5
e1,SBP,2,inf
";
        // 5 of 6 rows bad; allow it so we can inspect the report.
        let (cohort, report) = parse_cohort_csv(csv.as_bytes(), 1.0).unwrap();
        assert_eq!(report.rows, 6);
        let lines: Vec<u64> = report.bad_rows.iter().map(|(l, _)| *l).collect();
        assert_eq!(lines, vec![3, 4, 5, 6, 7]);
        assert_eq!(cohort[0].series[Variable::Sbp.index()].points, vec![(0.0, 120.0)]);
    }

    #[test]
    fn aborts_above_bad_fraction() {
        let csv = "\
encounter_id,variable,t_minutes,value
e1,SBP,0,120
e1,XYZ,1,5
";
        let err = parse_cohort_csv(csv.as_bytes(), 0.01).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn wrong_header_rejected() {
        let csv = "id,var,t,val\ne1,SBP,0,120\n";
        assert!(parse_cohort_csv(csv.as_bytes(), 0.01).is_err());
    }

    #[test]
    fn duplicate_timestamps_keep_last_row() {
        let csv = "\
encounter_id,variable,t_minutes,value
e1,SBP,5,120
e1,SBP,5,130
e1,SBP,1,110
";
        let (cohort, report) = parse_cohort_csv(csv.as_bytes(), 0.01).unwrap();
        assert_eq!(report.duplicate_rows, 1);
        assert_eq!(cohort[0].series[0].points, vec![(1.0, 110.0), (5.0, 130.0)]);
    }

    #[test]
    fn round_trip_is_exact() {
        let (cohort, _) = parse_cohort_csv(OK_CSV.as_bytes(), 0.01).unwrap();
        let mut buf = Vec::new();
        write_cohort_csv(&cohort, &mut buf).unwrap();
        let (back, _) = parse_cohort_csv(buf.as_slice(), 0.0).unwrap();
        assert_eq!(cohort, back);
    }
}
