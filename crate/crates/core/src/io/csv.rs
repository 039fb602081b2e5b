//! Plain CSV output with `#` comment metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulator::{Trace, TraceSample};

pub const TRACE_HEADER: &str = "t_s,v_applied_V,v_device_V,i_A,x,damage_J";

/// Ten significant digits in scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.9e}")
}

/// Column-oriented table; `None` cells are written empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_values(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| Some(v)).collect());
    }
}

impl From<&Trace> for Table {
    fn from(trace: &Trace) -> Self {
        let mut t = Table::new(&TRACE_HEADER.split(',').collect::<Vec<_>>());
        for s in &trace.samples {
            t.push_values(&[s.t, s.v_applied, s.v_device, s.i, s.x, s.damage]);
        }
        t
    }
}

/// Write `table` after one `# ` line per metadata entry.
pub fn write_table<W: Write + ?Sized>(table: &Table, meta: &[String], sink: &mut W) -> std::io::Result<()> {
    for line in meta {
        for part in line.lines() {
            writeln!(sink, "# {part}")?;
        }
    }
    writeln!(sink, "{}", table.header.join(","))?;
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|c| c.map(fmt_num).unwrap_or_default()).collect();
        writeln!(sink, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Metadata lines for a trace: seed and parameter hash, then `extra`.
pub fn trace_meta(trace: &Trace, extra: &[String]) -> Vec<String> {
    let mut meta = vec![format!("seed: {}", trace.meta.seed), format!("params_hash: {}", trace.meta.params_hash)];
    meta.extend_from_slice(extra);
    meta
}

pub fn write_trace_csv<W: Write + ?Sized>(trace: &Trace, extra_meta: &[String], sink: &mut W) -> std::io::Result<()> {
    write_table(&Table::from(trace), &trace_meta(trace, extra_meta), sink)
}

/// Write to `path`, surfacing I/O failures with the path attached.
pub fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Parsed CSV: comment lines (without `# `), header, numeric rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedCsv {
    pub comments: Vec<String>,
    pub table: Table,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let mut out = ParsedCsv::default();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        if let Some(c) = line.strip_prefix('#') {
            out.comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
            continue;
        }
        if !header_seen {
            out.table.header = line.split(',').map(str::to_string).collect();
            header_seen = true;
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| Error::invalid(format!("line {}: bad number `{cell}`", n + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != out.table.header.len() {
            return Err(Error::invalid(format!("line {}: {} cells, header has {}", n + 1, row.len(), out.table.header.len())));
        }
        out.table.rows.push(row);
    }
    if !header_seen {
        return Err(Error::invalid("csv has no header"));
    }
    Ok(out)
}

/// Trace samples from a parsed trace CSV.
pub fn samples_from(parsed: &ParsedCsv) -> Result<Vec<TraceSample>> {
    if parsed.table.header.join(",") != TRACE_HEADER {
        return Err(Error::invalid("not a trace csv"));
    }
    parsed
        .table
        .rows
        .iter()
        .map(|r| {
            let v: Vec<f64> = r.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
            Ok(TraceSample { t: v[0], v_applied: v[1], v_device: v[2], i: v[3], x: v[4], damage: v[5] })
        })
        .collect()
}
