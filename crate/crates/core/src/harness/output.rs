use std::io::Write;
use std::path::Path;

use super::run::ExperimentRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 11] = [
    "figure_id",
    "run_index",
    "slot",
    "algorithm",
    "param_name",
    "param_value",
    "nmse_gz_db",
    "nmse_h_db",
    "runtime_ms",
    "seed",
    "diverged",
];

/// Multi-axis sweeps join names and values with this separator.
const PARAM_SEP: &str = ";";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row(r: &ExperimentRecord) -> [String; 11] {
    let names: Vec<&str> = r.params.iter().map(|(n, _)| n.as_str()).collect();
    let values: Vec<String> = r.params.iter().map(|(_, v)| v.to_string()).collect();
    [
        r.figure_id.as_str().to_string(),
        r.run_index.to_string(),
        r.slot.to_string(),
        r.algorithm.as_str().to_string(),
        names.join(PARAM_SEP),
        values.join(PARAM_SEP),
        opt(r.nmse_gz_db),
        opt(r.nmse_h_db),
        opt(r.runtime_ms),
        r.seed.to_string(),
        r.diverged.to_string(),
    ]
}

/// Header plus one RFC 4180 row per record.
pub fn write_records<W: Write>(records: &[ExperimentRecord], sink: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let io = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_records(records, std::io::BufWriter::new(file)).map_err(|e| io(e.into()))
}
