//! Flat-file output. Every file starts with one header line naming the
//! crate version and the hash of the configuration that produced it.
//!
//! Numbers are written as `{:.16e}` (17 significant digits, '.' separator
//! in every locale since Rust formatting ignores locale), lines end in '\n'.

use std::io::{self, Write};

use serde::Serialize;

use crate::linalg::CMat;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub config_hash: String,
    pub version: String,
}

impl Header {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            version: VERSION.to_string(),
        }
    }

    pub fn line(&self) -> String {
        format!("# bdgchain {} config_sha256={}", self.version, self.config_hash)
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        // −0 and +0 print identically so sign noise does not break diffs
        format!("{:.16e}", 0.0)
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_f64(x),
        }
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &Header, columns: &[&str]) -> io::Result<Self> {
        out.write_all(header.line().as_bytes())?;
        out.write_all(b"\n")?;
        out.write_all(columns.join(",").as_bytes())?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            columns: columns.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> io::Result<()> {
        if cells.len() != self.columns {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("row has {} cells, header has {}", cells.len(), self.columns),
            ));
        }
        let line: Vec<String> = cells.iter().map(|c| c.render()).collect();
        self.out.write_all(line.join(",").as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// `(row, col, re, im)` per entry, row-major; `with_abs` appends `|value|`.
pub fn write_matrix_csv<W: Write>(out: W, header: &Header, m: &CMat, with_abs: bool) -> io::Result<W> {
    let cols: &[&str] = if with_abs { &["row", "col", "re", "im", "abs"] } else { &["row", "col", "re", "im"] };
    let mut w = CsvWriter::new(out, header, cols)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let mut cells = vec![Cell::from(i), Cell::from(j), Cell::from(z.re), Cell::from(z.im)];
            if with_abs {
                cells.push(Cell::from(z.norm()));
            }
            w.row(&cells)?;
        }
    }
    w.finish()
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    bdgchain_version: &'a str,
    config_sha256: &'a str,
    data: &'a T,
}

/// JSON cannot carry a comment line, so the header goes on the first line
/// as `#`-prefixed text and the document follows.
pub fn write_json<W: Write, T: Serialize>(mut out: W, header: &Header, data: &T) -> io::Result<W> {
    out.write_all(header.line().as_bytes())?;
    out.write_all(b"\n")?;
    let env = Envelope {
        bdgchain_version: &header.version,
        config_sha256: &header.config_hash,
        data,
    };
    serde_json::to_writer_pretty(&mut out, &env).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(out)
}

/// Inverse of [`write_json`] for tests and downstream tools.
pub fn read_json_body(text: &str) -> Option<&str> {
    let (first, rest) = text.split_once('\n')?;
    first.starts_with("# bdgchain ").then_some(rest)
}
