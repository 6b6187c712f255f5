use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const OUT_DIR_ENV: &str = "EXMOL_OUT_DIR";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Directory receiving CSV and JSON artifacts: the flag, else the environment, else `exmol-out`.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("exmol-out"),
    }
}

/// CSV sink: comment header lines, then RFC 4180 records with LF endings.
pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(
        dir: &Path,
        name: &str,
        hash: &str,
        metadata: &[(&str, String)],
        columns: &[&str],
    ) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut file = BufWriter::new(File::create(&path)?);
        writeln!(file, "# config_sha256={hash} version={VERSION}")?;
        for (k, v) in metadata {
            writeln!(file, "# {k}={v}")?;
        }
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        writer.write_record(columns).map_err(csv_error)?;
        Ok(Self { writer, path })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(csv_error)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_line_endings() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = CsvSink::create(
            dir.path(),
            "t.csv",
            "abc",
            &[("interpolation", "cubic".into())],
            &["s", "price"],
        )
        .unwrap();
        sink.row([num(0.5), num(1e-3)]).unwrap();
        let path = sink.finish().unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(
            text,
            format!("# config_sha256=abc version={VERSION}\n# interpolation=cubic\ns,price\n0.5,0.001\n")
        );
    }
}
