use std::io::{Read, Write};
use std::path::Path;

use super::experiment::{RoundReport, Scenario};
use crate::error::{Error, Result};

pub const ROUND_HEADER: [&str; 9] = [
    "round",
    "scenario",
    "aggregator",
    "client_id",
    "participated",
    "n_train",
    "n_test",
    "macro_f1",
    "loss",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per client per round, then an aggregate row with `client_id = -1`
/// whose `participated` column counts participants.
pub fn write_round_reports<W: Write>(writer: W, reports: &[RoundReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let csv_err = |e: csv::Error| Error::Config(format!("writing round report: {e}"));
    w.write_record(ROUND_HEADER).map_err(csv_err)?;
    for r in reports {
        let agg = r.aggregator.map_or("none".to_string(), |a| a.to_string());
        for c in &r.clients {
            w.write_record([
                r.round.to_string(),
                r.scenario.to_string(),
                agg.clone(),
                c.client_id.to_string(),
                (c.participated as u8).to_string(),
                c.n_train.to_string(),
                c.n_test.to_string(),
                opt(c.macro_f1),
                opt(c.loss),
            ])
            .map_err(csv_err)?;
        }
        let n_train: usize = r.clients.iter().map(|c| c.n_train).sum();
        let n_test: usize = r.clients.iter().map(|c| c.n_test).sum();
        w.write_record([
            r.round.to_string(),
            r.scenario.to_string(),
            agg,
            "-1".to_string(),
            r.participants().to_string(),
            n_train.to_string(),
            n_test.to_string(),
            opt(r.system_f1),
            opt(r.system_loss),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing round report: {e}")))?;
    Ok(())
}

pub fn save_round_reports(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_round_reports(std::io::BufWriter::new(file), reports)
}

/// System macro-F1 series read back from a round report.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundSeries {
    pub scenario: Scenario,
    pub aggregator: String,
    /// Indexed by round; NaN where no client was evaluated.
    pub f1: Vec<f64>,
}

pub fn read_round_series<R: Read>(reader: R) -> Result<RoundSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .clone();
    if header.iter().ne(ROUND_HEADER) {
        return Err(Error::MalformedHeader(format!(
            "expected `{}`",
            ROUND_HEADER.join(",")
        )));
    }
    let mut scenario = None;
    let mut aggregator = String::new();
    let mut f1 = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            field: "record".into(),
            message: e.to_string(),
        })?;
        let bad = |field: &str, message: String| Error::MalformedRow {
            row,
            field: field.into(),
            message,
        };
        if &rec[3] != "-1" {
            continue;
        }
        let round: usize = rec[0].parse().map_err(|e| bad("round", format!("{e}")))?;
        let s: Scenario = rec[1].parse().map_err(|e: Error| bad("scenario", e.to_string()))?;
        if scenario.is_some_and(|prev| prev != s) {
            return Err(bad("scenario", "mixed scenarios in one report".into()));
        }
        scenario = Some(s);
        aggregator = rec[2].to_string();
        let value = if rec[7].is_empty() {
            f64::NAN
        } else {
            rec[7].parse().map_err(|e| bad("macro_f1", format!("{e}")))?
        };
        if f1.len() <= round {
            f1.resize(round + 1, f64::NAN);
        }
        f1[round] = value;
    }
    let scenario = scenario.ok_or(Error::Empty("round report has no aggregate rows"))?;
    Ok(RoundSeries {
        scenario,
        aggregator,
        f1,
    })
}

pub fn load_round_series(path: &Path) -> Result<RoundSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_round_series(file)
}
