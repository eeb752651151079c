//! Tabular artifacts: CSV with a trailing manifest digest, and a
//! whitespace-separated copy for gnuplot.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, digest: &str) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Numerical(format!("csv: {e}"));
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let mut bytes = w.into_inner().map_err(|e| CliError::Numerical(format!("csv: {e}")))?;
        bytes.extend_from_slice(format!("# manifest-sha256: {digest}\n").as_bytes());
        Ok(bytes)
    }

    pub fn to_dat(&self, digest: &str) -> String {
        let mut out = format!("# {}\n", self.header.join(" "));
        for row in &self.rows {
            let cells: Vec<&str> = row.iter().map(|c| if c.is_empty() { "NaN" } else { c }).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out.push_str(&format!("# manifest-sha256: {digest}\n"));
        out
    }
}

/// Shortest round-trip form, in exponent notation away from unit scale.
pub fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Collects artifacts and writes them in one pass.
pub struct Writer {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Writer {
    pub fn new(dir: &Path) -> Self {
        Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn table(&mut self, stem: &str, table: &Table, digest: &str) -> CliResult<()> {
        self.files.push((format!("{stem}.csv"), table.to_csv(digest)?));
        self.files.push((format!("{stem}.dat"), table.to_dat(digest).into_bytes()));
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl serde::Serialize) {
        let text = serde_json::to_string_pretty(value).expect("serializable output");
        self.files.push((name.to_string(), (text + "\n").into_bytes()));
    }

    pub fn raw(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub fn finish(self) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// File names for a table stem.
pub fn table_files(stem: &str) -> [String; 2] {
    [format!("{stem}.csv"), format!("{stem}.dat")]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_digest_trailer() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(1.5), opt(None)]);
        let text = String::from_utf8(t.to_csv("abc").unwrap()).unwrap();
        assert_eq!(text, "a,b\n1.5,\n# manifest-sha256: abc\n");
        assert_eq!(t.to_dat("abc"), "# a b\n1.5 NaN\n# manifest-sha256: abc\n");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1 + 0.2, 1.799948813126696e-14, -3e20, 0.0, 42.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.8e-14), "1.8e-14");
    }
}
