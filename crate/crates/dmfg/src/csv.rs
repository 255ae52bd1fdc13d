//! Minimal CSV writer: header row, `.` decimal point, 17 significant digits,
//! `\n` line endings, atomic replacement of the target file.

use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::Path;

pub enum Cell<'a> {
    Num(f64),
    Int(u64),
    Text(&'a str),
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell<'_> {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell<'_> {
    fn from(v: bool) -> Self {
        Cell::Int(v as u64)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::Text(v)
    }
}

/// Round-trip exact: `{:.16e}` prints 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Default)]
pub struct Table {
    buf: String,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut t = Self {
            buf: String::new(),
            width: header.len(),
        };
        t.buf.push_str(&header.join(","));
        t.buf.push('\n');
        t
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        assert_eq!(cells.len(), self.width, "row width differs from header");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match c {
                Cell::Num(v) => self.buf.push_str(&format_f64(*v)),
                Cell::Int(v) => {
                    let _ = write!(self.buf, "{v}");
                }
                Cell::Text(s) => {
                    if s.contains([',', '"', '\n']) {
                        self.buf.push('"');
                        self.buf.push_str(&s.replace('"', "\"\""));
                        self.buf.push('"');
                    } else {
                        self.buf.push_str(s);
                    }
                }
            }
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
