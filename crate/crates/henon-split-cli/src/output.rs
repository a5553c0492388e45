//! CSV tables with hex-float sidecars, and the append-only run log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rug::Float;

/// One cell: exact values are kept for the sidecar.
#[derive(Clone, Debug)]
pub enum Cell {
    Float(Float),
    F64(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self, digits: usize) -> String {
        match self {
            Cell::Float(x) => x.to_string_radix(10, Some(digits)),
            Cell::F64(x) => format!("{x:e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Decimal digits for a given working precision: ceil(0.3 bits), at most 50.
pub fn digits_for(bits: u32) -> usize {
    ((0.3 * bits as f64).ceil() as usize).clamp(1, 50)
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "heterogeneous record");
        self.rows.push(row);
    }
}

/// Writes `name.csv` and `name.hex` (row, column, precision, hex value for every multiprecision cell).
pub fn emit_csv(table: &Table, dir: &Path, name: &str, bits: u32) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    let digits = digits_for(bits);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|c| c.render(digits)))?;
    }
    w.flush()?;
    let mut hx = csv::Writer::from_path(dir.join(format!("{name}.hex")))?;
    hx.write_record(["row", "column", "precision", "value"])?;
    for (i, row) in table.rows.iter().enumerate() {
        for (col, c) in table.header.iter().zip(row) {
            if let Cell::Float(x) = c {
                hx.write_record([i.to_string(), col.clone(), x.prec().to_string(), x.to_string_radix(16, None)])?;
            }
        }
    }
    hx.flush()?;
    Ok(path)
}

/// Reads a hex sidecar back as (row, column, value).
pub fn read_hex(path: &Path) -> Result<Vec<(usize, String, Float)>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row: usize = rec[0].parse().map_err(|_| "bad row index".to_string())?;
        let prec: u32 = rec[2].parse().map_err(|_| "bad precision".to_string())?;
        let v = Float::parse_radix(&rec[3], 16).map_err(|e| e.to_string())?;
        out.push((row, rec[1].to_string(), Float::with_val(prec, v)));
    }
    Ok(out)
}

/// Appends one timestamped line to run.log in `dir`.
pub fn log_line(dir: &Path, line: &str) {
    if std::fs::create_dir_all(dir).is_err() {
        return;
    }
    if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(dir.join("run.log")) {
        let _ = writeln!(f, "{} {line}", chrono::Utc::now().to_rfc3339());
    }
}
