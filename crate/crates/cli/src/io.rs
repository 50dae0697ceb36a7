//! Output files are written to a temporary sibling and renamed into place,
//! so a failed run never leaves a half-written result behind.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Stdout, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

pub struct AtomicFile {
    writer: BufWriter<NamedTempFile>,
    dest: PathBuf,
}

impl AtomicFile {
    pub fn create(dest: &Path) -> Result<Self> {
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let tmp = NamedTempFile::new_in(parent)
            .with_context(|| format!("creating a file in {}", parent.display()))?;
        Ok(Self {
            writer: BufWriter::new(tmp),
            dest: dest.to_path_buf(),
        })
    }

    pub fn commit(self) -> Result<()> {
        let tmp = self
            .writer
            .into_inner()
            .map_err(|e| e.into_error())
            .with_context(|| format!("writing {}", self.dest.display()))?;
        tmp.persist(&self.dest)
            .map_err(|e| e.error)
            .with_context(|| format!("writing {}", self.dest.display()))?;
        Ok(())
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

/// Where a streaming command sends its records.
pub enum Sink {
    File(AtomicFile),
    Stdout(BufWriter<Stdout>),
}

impl Sink {
    pub fn open(out: Option<&Path>, stdout: bool) -> Result<Self> {
        match (out, stdout) {
            (_, true) => Ok(Sink::Stdout(BufWriter::new(io::stdout()))),
            (Some(path), false) => Ok(Sink::File(AtomicFile::create(path)?)),
            (None, false) => bail!("no output given; pass --out or --stdout"),
        }
    }

    pub fn line(&mut self, line: &str) -> Result<()> {
        writeln!(self, "{line}").context("writing output")
    }

    pub fn finish(self) -> Result<()> {
        match self {
            Sink::File(f) => f.commit(),
            Sink::Stdout(mut w) => w.flush().context("writing to standard output"),
        }
    }
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::File(f) => f.write(buf),
            Sink::Stdout(w) => w.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::File(f) => f.flush(),
            Sink::Stdout(w) => w.flush(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = AtomicFile::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).context("serializing output")?;
    writeln!(f).context("writing output")?;
    f.commit()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| {
        ganeye_core::Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        }
        .into()
    })
}

/// `<out>.json` next to a CSV output, for bandwidth and sample-size metadata.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let candidate = out.with_extension("json");
    if candidate == out {
        let mut name = out.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    } else {
        candidate
    }
}

/// Reads numbers from a file:
/// - with `column`, from that column of a CSV file, or that field of each
///   line of a `.jsonl` file;
/// - otherwise one number per non-blank line.
pub fn load_values(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let invalid = |line: usize, message: String| ganeye_core::Error::Parse {
        line,
        message: format!("{}: {message}", path.display()),
    };
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    match column {
        Some(field) if is_jsonl => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let mut values = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.with_context(|| format!("reading {}", path.display()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let v: serde_json::Value =
                    serde_json::from_str(&line).map_err(|e| invalid(i + 1, e.to_string()))?;
                let x = v
                    .get(field)
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| invalid(i + 1, format!("no numeric field {field:?}")))?;
                values.push(x);
            }
            Ok(values)
        }
        Some(name) => {
            let mut reader = csv::Reader::from_path(path)
                .with_context(|| format!("opening {}", path.display()))?;
            let headers = reader.headers().map_err(|e| invalid(1, e.to_string()))?;
            let idx = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| invalid(1, format!("no column {name:?}")))?;
            let mut values = Vec::new();
            for (i, row) in reader.records().enumerate() {
                let line = i + 2;
                let row = row.map_err(|e| invalid(line, e.to_string()))?;
                let cell = row.get(idx).unwrap_or_default().trim();
                values.push(
                    cell.parse()
                        .map_err(|_| invalid(line, format!("not a number: {cell:?}")))?,
                );
            }
            Ok(values)
        }
        None => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let mut values = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.with_context(|| format!("reading {}", path.display()))?;
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                values.push(t.parse().map_err(|_| invalid(i + 1, format!("not a number: {t:?}")))?);
            }
            Ok(values)
        }
    }
}
