//! Result emission: versioned JSON, CSV tables and the `GFLM` matrix format.
//!
//! Every float is written in scientific notation with 17 significant digits,
//! so documents are byte-identical for identical inputs.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const MATRIX_MAGIC: &[u8; 4] = b"GFLM";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("[output] format: expected json or csv, got '{other}'"))),
        }
    }
}

struct FixedDigits {
    indent: usize,
    has_value: bool,
}

impl FixedDigits {
    fn new() -> Self {
        FixedDigits { indent: 0, has_value: false }
    }

    fn newline<W: ?Sized + Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

/// `{:.16e}`: 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Serializes any value with the fixed-digit formatter.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, FixedDigits::new());
    value.serialize(&mut ser).map_err(|e| Error::Format(format!("JSON serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// The versioned result document `{"gfl_schema": 1, "kind": …, "report": …}`.
pub fn document<T: Serialize>(kind: &str, report: &T) -> Result<String> {
    let report = serde_json::to_value(report).map_err(|e| Error::Format(e.to_string()))?;
    to_json_string(&json!({ "gfl_schema": SCHEMA_VERSION, "kind": kind, "report": report }))
}

/// Run metadata kept apart from the deterministic result document.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub kind: String,
    pub version: String,
    pub unix_time: u64,
    pub threads: usize,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Metadata {
    pub fn now(kind: &str, config: Option<&Path>, seed: Option<u64>) -> Self {
        Metadata {
            kind: kind.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            threads: rayon::current_num_threads(),
            config: config.map(Path::to_path_buf),
            seed,
        }
    }
}

/// Writes `<dir>/<kind>.json` and `<dir>/<kind>.meta.json`.
pub fn write_json<T: Serialize>(dir: &Path, kind: &str, report: &T, meta: &Metadata) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{kind}.json"));
    std::fs::write(&path, document(kind, report)?)?;
    std::fs::write(dir.join(format!("{kind}.meta.json")), to_json_string(meta)?)?;
    Ok(path)
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => {
            if n.is_f64() {
                format_f64(n.as_f64().expect("f64 number"))
            } else {
                n.to_string()
            }
        }
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// CSV text with one row per element; columns follow the field order of `T`.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header: Option<Vec<String>> = None;
    for row in rows {
        let Value::Object(map) = serde_json::to_value(row).map_err(|e| Error::Format(e.to_string()))? else {
            return Err(Error::Format("CSV rows must serialize as objects".into()));
        };
        if header.is_none() {
            let h: Vec<String> = map.keys().cloned().collect();
            out.write_record(&h).map_err(|e| Error::Format(e.to_string()))?;
            header = Some(h);
        }
        out.write_record(map.values().map(cell)).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 cells"))
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    std::fs::write(&path, csv_string(rows)?)?;
    Ok(path)
}

/// `GFLM`: magic, u32 rows, u32 cols, then row-major `(re, im)` binary64 pairs, all little-endian.
pub fn write_matrix<W: Write>(mut out: W, m: &Mat<Complex64>) -> Result<()> {
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(m.nrows() as u32).to_le_bytes())?;
    out.write_all(&(m.ncols() as u32).to_le_bytes())?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.write_all(&m[(r, c)].re.to_le_bytes())?;
            out.write_all(&m[(r, c)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: Read>(mut input: R) -> Result<Mat<Complex64>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format("not a GFLM matrix".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let rows = u32::from_le_bytes(b4) as usize;
    input.read_exact(&mut b4)?;
    let cols = u32::from_le_bytes(b4) as usize;
    let mut data = vec![0u8; rows * cols * 16];
    input.read_exact(&mut data)?;
    let f = |i: usize| f64::from_le_bytes(data[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    Ok(Mat::from_fn(rows, cols, |r, c| {
        let k = 2 * (r * cols + c);
        Complex64::new(f(k), f(k + 1))
    }))
}

pub fn write_matrix_file(path: &Path, m: &Mat<Complex64>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_matrix(io::BufWriter::new(std::fs::File::create(path)?), m)
}
