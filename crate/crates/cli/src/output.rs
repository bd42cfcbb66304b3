//! File formats: the diagnostics time series (CSV) and plain-text field
//! snapshots.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use pnpch_core::{PeriodicGrid, SeriesRecord};
use thiserror::Error;

/// First line of every series file; carries the only non-reproducible
/// content (the creation time).
pub const SERIES_STAMP_PREFIX: &str = "# pnpch series";

pub fn series_header(species: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "step",
        "time",
        "F_total",
        "F_electro",
        "F_entropy",
        "F_steric",
        "F_gradient",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=species).map(|m| format!("mass_{m}")));
    cols.extend((1..=species).map(|m| format!("minc_{m}")));
    cols.push("newton_iters".into());
    cols
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Streams [`SeriesRecord`]s as CSV rows.
pub struct SeriesWriter<W: Write> {
    csv: csv::Writer<W>,
    species: usize,
}

impl SeriesWriter<BufWriter<File>> {
    pub fn create(path: &Path, species: usize) -> io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        Self::new(BufWriter::new(File::create(path)?), species)
    }
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(mut out: W, species: usize) -> io::Result<Self> {
        writeln!(
            out,
            "{SERIES_STAMP_PREFIX}, created {}",
            chrono::Utc::now().to_rfc3339()
        )?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(series_header(species))?;
        Ok(Self { csv, species })
    }

    pub fn write(&mut self, r: &SeriesRecord) -> io::Result<()> {
        let e = &r.energy;
        let mut row = vec![
            r.step.to_string(),
            num(r.time),
            num(e.total),
            num(e.electrostatic),
            num(e.entropy),
            num(e.steric),
            num(e.gradient),
        ];
        debug_assert_eq!(r.mass.len(), self.species);
        row.extend(r.mass.iter().map(|&v| num(v)));
        row.extend(r.min_concentration.iter().map(|&v| num(v)));
        row.push(r.newton_iterations.to_string());
        self.csv.write_record(&row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.csv.flush()
    }
}

/// Reads a series file back as a header and numeric rows, skipping the
/// stamp line.
pub fn read_series(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            })
            .collect::<io::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub const SNAPSHOT_SCHEMA: u32 = 1;

/// Cell values of several fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub step: usize,
    pub dim: usize,
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub fields: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl Snapshot {
    pub fn new(
        grid: &PeriodicGrid,
        time: f64,
        step: usize,
        fields: Vec<(String, Vec<f64>)>,
    ) -> Self {
        Self {
            time,
            step,
            dim: grid.dim(),
            n: grid.n(),
            lo: grid.lo(),
            hi: grid.hi(),
            fields,
        }
    }

    fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Header lines, then one block per field: a `field <name>` line and
    /// the values in cell-index order, `n` per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let names: Vec<&str> = self.fields.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(w, "pnpch-snapshot {SNAPSHOT_SCHEMA}")?;
        writeln!(w, "time {}", num(self.time))?;
        writeln!(w, "step {}", self.step)?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "n {}", self.n)?;
        writeln!(w, "bounds {} {}", num(self.lo), num(self.hi))?;
        writeln!(w, "fields {}", names.join(" "))?;
        for (name, values) in &self.fields {
            writeln!(w, "field {name}")?;
            for chunk in values.chunks(self.n.max(1)) {
                let line: Vec<String> = chunk.iter().map(|&v| num(v)).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        w.flush()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, SnapshotError> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), SnapshotError> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(SnapshotError::Format {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let bad = |line: usize, message: String| SnapshotError::Format { line, message };
        let keyed = |(line, text): (usize, String),
                     key: &str|
         -> Result<(usize, Vec<String>), SnapshotError> {
            let mut parts = text.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(line, format!("expected `{key}`")));
            }
            Ok((line, parts.map(str::to_string).collect()))
        };
        let parse_f =
            |line: usize, s: &str| s.parse::<f64>().map_err(|e| bad(line, format!("{s}: {e}")));
        let parse_u = |line: usize, s: &str| {
            s.parse::<usize>()
                .map_err(|e| bad(line, format!("{s}: {e}")))
        };
        let single = |(line, v): (usize, Vec<String>)| -> Result<(usize, String), SnapshotError> {
            match v.as_slice() {
                [x] => Ok((line, x.clone())),
                _ => Err(bad(line, "expected one value".into())),
            }
        };

        let (line, v) = single(keyed(next("header")?, "pnpch-snapshot")?)?;
        if parse_u(line, &v)? != SNAPSHOT_SCHEMA as usize {
            return Err(bad(line, format!("unsupported snapshot schema {v}")));
        }
        let (line, v) = single(keyed(next("time")?, "time")?)?;
        let time = parse_f(line, &v)?;
        let (line, v) = single(keyed(next("step")?, "step")?)?;
        let step = parse_u(line, &v)?;
        let (line, v) = single(keyed(next("dim")?, "dim")?)?;
        let dim = parse_u(line, &v)?;
        let (line, v) = single(keyed(next("n")?, "n")?)?;
        let n = parse_u(line, &v)?;
        let (line, v) = keyed(next("bounds")?, "bounds")?;
        let [lo, hi] = v.as_slice() else {
            return Err(bad(line, "expected two bounds".into()));
        };
        let (lo, hi) = (parse_f(line, lo)?, parse_f(line, hi)?);
        let (_, names) = keyed(next("fields")?, "fields")?;

        let mut snap = Snapshot {
            time,
            step,
            dim,
            n,
            lo,
            hi,
            fields: Vec::new(),
        };
        let cells = snap.cells();
        for name in names {
            let (line, v) = single(keyed(next("field")?, "field")?)?;
            if v != name {
                return Err(bad(line, format!("expected field `{name}`, found `{v}`")));
            }
            let mut values = Vec::with_capacity(cells);
            while values.len() < cells {
                let (line, text) = next("values")?;
                for tok in text.split_whitespace() {
                    values.push(parse_f(line, tok)?);
                }
            }
            if values.len() != cells {
                return Err(bad(
                    line,
                    format!(
                        "field `{name}` has {} values, expected {cells}",
                        values.len()
                    ),
                ));
            }
            snap.fields.push((name, values));
        }
        Ok(snap)
    }

    pub fn read(path: &Path) -> Result<Self, SnapshotError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
