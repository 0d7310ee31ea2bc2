//! Trace CSV files and atomic writes.

use std::io::{self, Write};
use std::path::Path;

use crate::sim::SimTrace;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn trace_header(n: usize, m: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(1 + n * (4 * m + 2));
    h.push("t".to_string());
    for i in 1..=n {
        for name in ["q", "qdot", "v", "s"] {
            h.extend((1..=m).map(|c| format!("{name}_{i}_{c}")));
        }
        h.push(format!("Vlyap_{i}"));
        h.push(format!("da_norm_{i}"));
    }
    h
}

/// Steps kept with thinning `stride`: every `stride`-th one plus the last.
pub fn kept_steps(len: usize, stride: usize) -> impl Iterator<Item = usize> {
    let stride = stride.max(1);
    (0..len).filter(move |&k| k % stride == 0 || k + 1 == len)
}

/// CSV text of a trace. Numbers use the shortest representation that
/// parses back to the same `f64`.
pub fn trace_csv(trace: &SimTrace, stride: usize) -> Vec<u8> {
    let n = trace.n_agents();
    let m = trace.dof;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace_header(n, m)).expect("in-memory write");
    let mut record: Vec<String> = Vec::with_capacity(1 + n * (4 * m + 2));
    for k in kept_steps(trace.len(), stride) {
        record.clear();
        record.push(trace.times[k].to_string());
        for a in &trace.agents {
            for series in [&a.q, &a.qdot, &a.v, &a.s] {
                record.extend(trace.row(series, k).iter().map(f64::to_string));
            }
            record.push(a.lyapunov[k].to_string());
            record.push(a.da_norm[k].to_string());
        }
        w.write_record(&record).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_trace(path: &Path, trace: &SimTrace, stride: usize) -> io::Result<()> {
    write_atomic(path, &trace_csv(trace, stride))
}

#[derive(Debug, thiserror::Error)]
pub enum TraceReadError {
    #[error("cannot read trace: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trace: {0}")]
    Format(String),
}

/// A trace read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub n_agents: usize,
    pub dof: usize,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r[0])
    }

    /// Values of column `name` over all rows.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}

fn infer_shape(header: &[String]) -> Result<(usize, usize), TraceReadError> {
    if header.first().map(String::as_str) != Some("t") {
        return Err(TraceReadError::Format("first column must be t".into()));
    }
    let m = header.iter().filter(|h| h.starts_with("q_1_")).count();
    let n = header.iter().filter(|h| h.starts_with("Vlyap_")).count();
    if m == 0 || n == 0 {
        return Err(TraceReadError::Format("cannot find q_1_* and Vlyap_* columns".into()));
    }
    if header != trace_header(n, m).as_slice() {
        return Err(TraceReadError::Format(format!("header does not match the layout for {n} agents with {m} coordinates")));
    }
    Ok((n, m))
}

pub fn parse_trace(bytes: &[u8]) -> Result<TraceTable, TraceReadError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let (n_agents, dof) = infer_shape(&header)?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TraceReadError::Format(format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(TraceReadError::Format("trace has no rows".into()));
    }
    Ok(TraceTable { n_agents, dof, header, rows })
}

pub fn read_trace(path: &Path) -> Result<TraceTable, TraceReadError> {
    parse_trace(&std::fs::read(path)?)
}
