//! CSV tables written by the command-line front end.
//!
//! Every table starts with a `# fcs-<kind> v<N>` comment line followed by a
//! header row. Floats use the shortest representation that round-trips.

use std::io::{Read, Write};

use crate::design::{ConfidenceSet, Method, TrialRecord};
use crate::error::{FcsError, Result};
use crate::fcs::{CandidateGrid, GridConfidenceSet};
use crate::landscape::sequence_string;
use crate::metrics::{SweepSummary, TradeoffPoint};
use crate::split::StaircaseSet;

pub const RECORDS_SCHEMA: &str = "# fcs-records v1";
pub const SUMMARY_SCHEMA: &str = "# fcs-summary v1";
pub const TRADEOFF_SCHEMA: &str = "# fcs-tradeoff v1";
pub const JACCARD_SCHEMA: &str = "# fcs-jaccard v1";

pub const RECORD_COLUMNS: [&str; 13] = [
    "trial",
    "method",
    "n",
    "lambda",
    "test_id",
    "test_seq",
    "predicted",
    "true_label",
    "covered",
    "width_or_size",
    "set_min",
    "grid",
    "set",
];

fn writer<W: Write>(mut out: W, schema: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "{schema}")?;
    Ok(csv::Writer::from_writer(out))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Included grid indices as inclusive runs, `a-b;c-d`.
fn encode_grid_set(set: &GridConfidenceSet) -> String {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &inc) in set
        .included
        .iter()
        .chain(std::iter::once(&false))
        .enumerate()
    {
        match (inc, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push(format!("{s}-{}", k - 1));
                start = None;
            }
            _ => {}
        }
    }
    runs.join(";")
}

fn decode_grid_set(grid: CandidateGrid, text: &str) -> Option<GridConfidenceSet> {
    let mut included = vec![false; grid.len()];
    for run in text.split(';').filter(|r| !r.is_empty()) {
        let (a, b) = run.split_once('-')?;
        let (a, b): (usize, usize) = (a.parse().ok()?, b.parse().ok()?);
        if a > b || b >= included.len() {
            return None;
        }
        included[a..=b].iter_mut().for_each(|f| *f = true);
    }
    Some(GridConfidenceSet { grid, included })
}

fn encode_intervals(set: &StaircaseSet) -> String {
    set.intervals()
        .iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_intervals(text: &str) -> Option<StaircaseSet> {
    let mut pieces = Vec::new();
    for part in text.split(';').filter(|r| !r.is_empty()) {
        let (a, b) = part.split_once(':')?;
        pieces.push((a.parse().ok()?, b.parse().ok()?));
    }
    Some(StaircaseSet::new(pieces))
}

/// Writes one row per record; `length` is the sequence length used for `test_seq`.
pub fn write_records<W: Write>(out: W, records: &[TrialRecord], length: usize) -> Result<()> {
    let mut w = writer(out, RECORDS_SCHEMA)?;
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        let (grid, set) = match &r.set {
            ConfidenceSet::Grid(g) => (g.grid.to_string(), encode_grid_set(g)),
            ConfidenceSet::Staircase(s) => (String::new(), encode_intervals(s)),
        };
        w.write_record([
            r.trial.to_string(),
            r.method.to_string(),
            r.n.to_string(),
            r.lambda.to_string(),
            r.test_id.to_string(),
            sequence_string(r.test_id, length),
            r.predicted.to_string(),
            r.true_label.to_string(),
            u8::from(r.covered).to_string(),
            r.size.to_string(),
            opt(r.set.min()),
            grid,
            set,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RECORD_COLUMNS) {
        return Err(FcsError::Format {
            row: 1,
            message: format!("unexpected records header {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let fmt = |what: &str| FcsError::Format {
            row,
            message: format!("invalid {what}"),
        };
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| fmt(RECORD_COLUMNS[k]));
        let int = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|_| fmt(RECORD_COLUMNS[k]))
        };
        let method: Method = field(1).parse().map_err(|_| fmt("method"))?;
        let set = if method.is_grid() {
            let grid: CandidateGrid = field(11).parse().map_err(|_| fmt("grid"))?;
            ConfidenceSet::Grid(decode_grid_set(grid, field(12)).ok_or_else(|| fmt("set"))?)
        } else {
            ConfidenceSet::Staircase(decode_intervals(field(12)).ok_or_else(|| fmt("set"))?)
        };
        let covered = match field(8) {
            "1" => true,
            "0" => false,
            _ => return Err(fmt("covered")),
        };
        out.push(TrialRecord {
            trial: int(0)?,
            method,
            n: int(2)?,
            lambda: num(3)?,
            test_id: int(4)?,
            true_label: num(7)?,
            predicted: num(6)?,
            covered,
            size: num(9)?,
            set,
        });
    }
    Ok(out)
}

pub fn write_summary<W: Write>(out: W, summaries: &[SweepSummary]) -> Result<()> {
    let mut w = writer(out, SUMMARY_SCHEMA)?;
    w.write_record([
        "n",
        "lambda",
        "method",
        "trials",
        "coverage",
        "mean_width",
        "median_width",
        "min_width",
        "max_width",
        "mean_width_fraction",
        "fraction_infinite",
        "mean_predicted",
        "exceed_reference",
    ])?;
    for s in summaries {
        w.write_record([
            s.n.to_string(),
            s.lambda.to_string(),
            s.method.to_string(),
            s.trials.to_string(),
            s.coverage.to_string(),
            s.mean_width.to_string(),
            s.median_width.to_string(),
            s.min_width.to_string(),
            s.max_width.to_string(),
            s.mean_width_fraction.to_string(),
            s.fraction_infinite.to_string(),
            s.mean_predicted.to_string(),
            opt(s.exceed_reference),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trade-off rows tagged with the `(n, method)` cell they belong to.
pub fn write_tradeoff<W: Write>(
    out: W,
    rows: &[(usize, Method, TradeoffPoint, Option<f64>)],
) -> Result<()> {
    let mut w = writer(out, TRADEOFF_SCHEMA)?;
    w.write_record([
        "n",
        "method",
        "lambda",
        "mean_predicted",
        "mean_width",
        "fraction_infinite",
        "exceed_reference",
    ])?;
    for (n, method, p, exceed) in rows {
        w.write_record([
            n.to_string(),
            method.to_string(),
            p.lambda.to_string(),
            p.mean_predicted.to_string(),
            p.mean_width.to_string(),
            p.fraction_infinite.to_string(),
            opt(*exceed),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JaccardRow {
    pub n: usize,
    pub lambda: f64,
    pub trial: usize,
    pub method_a: Method,
    pub method_b: Method,
    pub jaccard: f64,
}

pub fn write_jaccard<W: Write>(out: W, rows: &[JaccardRow]) -> Result<()> {
    let mut w = writer(out, JACCARD_SCHEMA)?;
    w.write_record(["n", "lambda", "trial", "method_a", "method_b", "jaccard"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.lambda.to_string(),
            r.trial.to_string(),
            r.method_a.to_string(),
            r.method_b.to_string(),
            r.jaccard.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_record(flags: Vec<bool>) -> TrialRecord {
        let grid = CandidateGrid::new(-1.0, 1.0, 0.25).unwrap();
        let set = ConfidenceSet::Grid(GridConfidenceSet {
            grid,
            included: flags,
        });
        TrialRecord {
            trial: 3,
            method: Method::ScsFull,
            n: 16,
            lambda: 2.5,
            test_id: 5,
            true_label: 0.1,
            predicted: -0.2,
            covered: set.covers(0.1),
            size: set.size(),
            set,
        }
    }

    #[test]
    fn records_survive_a_write_read_cycle() {
        let mut flags = vec![false; 9];
        flags[1] = true;
        flags[2] = true;
        flags[8] = true;
        let staircase = TrialRecord {
            method: Method::Staircase,
            set: ConfidenceSet::Staircase(StaircaseSet::new(vec![
                (f64::NEG_INFINITY, -1.5),
                (0.25, f64::INFINITY),
            ])),
            size: f64::INFINITY,
            ..grid_record(vec![false; 9])
        };
        let records = vec![grid_record(flags), grid_record(vec![false; 9]), staircase];
        let mut buf = Vec::new();
        write_records(&mut buf, &records, 4).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(RECORDS_SCHEMA));
        assert!(text.contains(",0101,"));
        assert!(text.contains("1-2;8-8"));
        assert_eq!(read_records(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn malformed_rows_report_their_row() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[grid_record(vec![true; 9])], 4).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("scs_full", "nope");
        let err = read_records(text.as_bytes()).unwrap_err();
        assert!(matches!(err, FcsError::Format { row: 2, .. }), "{err}");
    }
}
