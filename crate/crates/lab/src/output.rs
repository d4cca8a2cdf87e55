//! Artifact writing: CSV tables with unit-annotated headers and JSON files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LabError, LabResult};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "METALAB_OUT";

/// A column: name and unit; the header cell reads `name [unit]`.
pub type Column = (&'static str, &'static str);

/// Output directory plus the list of files written so far.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    pub fn new(dir: impl Into<PathBuf>) -> LabResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
        Ok(Output { dir, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Relative names of the files written, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn table(&mut self, name: &str, columns: &[Column]) -> LabResult<Table> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| LabError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let header: Vec<String> = columns.iter().map(|(n, u)| format!("{n} [{u}]")).collect();
        w.write_record(&header).map_err(|e| LabError::format(&path, e))?;
        Ok(Table { w, path, width: columns.len() })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> LabResult<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::format(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| LabError::io(&path, e))
    }
}

/// One cell of a CSV row.
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    B(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // Shortest representation that round-trips.
            Cell::F(v) => format!("{v:?}"),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

/// Builds a row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($crate::output::Cell::from($v)),*] };
}

pub struct Table {
    w: csv::Writer<BufWriter<File>>,
    path: PathBuf,
    width: usize,
}

impl Table {
    pub fn row(&mut self, cells: Vec<Cell>) -> LabResult<()> {
        assert_eq!(cells.len(), self.width, "row width does not match the header");
        let rec: Vec<String> = cells.iter().map(Cell::render).collect();
        self.w.write_record(&rec).map_err(|e| LabError::format(&self.path, e))
    }

    pub fn finish(mut self) -> LabResult<()> {
        self.w.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

/// Writes a plain text file through an [`Output`].
pub fn text(out: &mut Output, name: &str, body: &str) -> LabResult<()> {
    let path = out.path(name);
    let mut f = File::create(&path).map_err(|e| LabError::io(&path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| LabError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::new(dir.path()).unwrap();
        let mut t = out.table("t.csv", &[("x", "1"), ("ok", "bool"), ("name", "-")]).unwrap();
        t.row(row![0.1, true, "a,b"]).unwrap();
        t.row(row![1e-300, false, "c"]).unwrap();
        t.finish().unwrap();
        let s = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(s, "x [1],ok [bool],name [-]\n0.1,true,\"a,b\"\n1e-300,false,c\n");
        assert_eq!(out.written(), ["t.csv"]);
    }
}
