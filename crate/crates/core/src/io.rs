//! Output formats: diagnostics CSV, `LRVS` grid snapshots and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scenarios::run::{DiagnosticsRecord, ErrorNorm, Observer, RunOutput, SnapshotData};
use crate::scenarios::ScenarioConfig;

pub const DIAG_HEADER: [&str; 12] = [
    "t",
    "rank_1",
    "rank_2",
    "rank_3",
    "rank_4",
    "rank_12",
    "rank_34",
    "elec_energy",
    "mass_rel_err",
    "energy_rel_err",
    "l2_err",
    "step_seconds",
];

pub const LRVS_MAGIC: [u8; 4] = *b"LRVS";
pub const LRVS_VERSION: u32 = 1;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// The columns of one `diag.csv` row.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagRow {
    pub t: f64,
    pub ranks: [Option<usize>; 6],
    pub elec_energy: f64,
    pub mass_rel_err: f64,
    pub energy_rel_err: f64,
    pub l2_err: Option<f64>,
    pub step_seconds: f64,
}

impl From<&DiagnosticsRecord> for DiagRow {
    fn from(r: &DiagnosticsRecord) -> Self {
        DiagRow {
            t: r.t,
            ranks: r.ranks,
            elec_energy: r.elec_energy,
            mass_rel_err: r.mass_rel_err,
            energy_rel_err: r.energy_rel_err,
            l2_err: r.l2_err,
            step_seconds: r.step_seconds,
        }
    }
}

impl DiagRow {
    fn fields(&self) -> Vec<String> {
        let mut v = vec![format_f64(self.t)];
        v.extend(self.ranks.iter().map(|r| r.map(|r| r.to_string()).unwrap_or_default()));
        v.push(format_f64(self.elec_energy));
        v.push(format_f64(self.mass_rel_err));
        v.push(format_f64(self.energy_rel_err));
        v.push(self.l2_err.map(format_f64).unwrap_or_default());
        v.push(format_f64(self.step_seconds));
        v
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != DIAG_HEADER.len() {
            return Err(Error::Format(format!(
                "diag row has {} fields, expected {}",
                rec.len(),
                DIAG_HEADER.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("column {}: {e}", DIAG_HEADER[i])))
        };
        let opt_num = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let mut ranks = [None; 6];
        for (k, r) in ranks.iter_mut().enumerate() {
            let s = &rec[1 + k];
            if !s.is_empty() {
                *r = Some(
                    s.parse::<usize>()
                        .map_err(|e| Error::Format(format!("column {}: {e}", DIAG_HEADER[1 + k])))?,
                );
            }
        }
        Ok(DiagRow {
            t: num(0)?,
            ranks,
            elec_energy: num(7)?,
            mass_rel_err: num(8)?,
            energy_rel_err: num(9)?,
            l2_err: opt_num(10)?,
            step_seconds: num(11)?,
        })
    }
}

/// Append-only writer for `diag.csv`; every row is flushed as it is written.
pub struct DiagWriter {
    path: PathBuf,
    out: csv::Writer<BufWriter<File>>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

impl DiagWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        out.write_record(DIAG_HEADER).map_err(|e| csv_err(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, out })
    }

    pub fn append(&mut self, row: &DiagRow) -> Result<()> {
        self.out
            .write_record(row.fields())
            .map_err(|e| csv_err(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = DiagWriter::create(path)?;
    for r in records {
        w.append(&r.into())?;
    }
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(DIAG_HEADER) {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    rdr.records()
        .map(|r| DiagRow::parse(&r.map_err(|e| csv_err(path, e))?))
        .collect()
}

/// Encode grid values (row-major, last dimension fastest) as an `LRVS` blob.
pub fn encode_lrvs(dims: &[usize], values: &[f64]) -> Result<Vec<u8>> {
    let count: usize = dims.iter().product();
    if count != values.len() {
        return Err(Error::Shape {
            context: "encode_lrvs",
            expected: format!("{count} values for dims {dims:?}"),
            found: format!("{}", values.len()),
        });
    }
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + 8 * values.len());
    out.extend_from_slice(&LRVS_MAGIC);
    out.extend_from_slice(&LRVS_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::InvalidInput(format!("dimension {d} too large")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decode an `LRVS` blob into its dimensions and row-major values.
pub fn decode_lrvs(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    let bad = |m: &str| Error::Format(format!("LRVS: {m}"));
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
            .ok_or_else(|| bad("truncated header"))
    };
    if bytes.get(..4) != Some(&LRVS_MAGIC[..]) {
        return Err(bad("bad magic"));
    }
    let version = u32_at(4)?;
    if version != LRVS_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let nd = u32_at(8)? as usize;
    if nd == 0 || nd > 16 {
        return Err(bad(&format!("implausible dimension count {nd}")));
    }
    let dims = (0..nd)
        .map(|k| u32_at(12 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 12 + 4 * nd;
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != start + 8 * count {
        return Err(bad(&format!(
            "payload is {} bytes, expected {}",
            bytes.len() - start.min(bytes.len()),
            8 * count
        )));
    }
    let values = bytes[start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Ok((dims, values))
}

/// Row-major values of a matrix.
pub fn row_major(m: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for i in 0..m.rows() {
        out.extend(m.row(i));
    }
    out
}

pub fn write_lrvs(path: &Path, m: &DenseMatrix) -> Result<()> {
    let bytes = encode_lrvs(&[m.rows(), m.cols()], &row_major(m))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a two-dimensional `LRVS` file as a matrix.
pub fn read_lrvs(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dims, v) = decode_lrvs(&bytes)?;
    if dims.len() != 2 {
        return Err(Error::Format(format!(
            "{}: expected 2 dimensions, found {}",
            path.display(),
            dims.len()
        )));
    }
    let (r, c) = (dims[0], dims[1]);
    Ok(DenseMatrix::from_fn(r, c, |i, j| v[i * c + j]))
}

/// Extent of one grid dimension, for consumers of the snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridExtent {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub cell_centered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub step: usize,
    pub t: f64,
    pub files: Vec<String>,
}

/// Summary written once at the end of each run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ScenarioConfig,
    pub code_version: String,
    pub grid: Vec<GridExtent>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    pub step_seconds_total: f64,
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub max_rank: usize,
    pub error: Option<f64>,
    pub map_errors: Option<(f64, f64)>,
    pub error_norm: ErrorNorm,
    pub snapshots: Vec<SnapshotEntry>,
    /// `"ok"` or the failure message.
    pub exit_status: String,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let grid = cfg
            .grids()?
            .iter()
            .map(|g| GridExtent {
                lo: g.lo(),
                hi: g.hi(),
                n: g.n(),
                cell_centered: g.layout() == crate::stencil::Layout::CellCentered,
            })
            .collect();
        Ok(Self {
            config: cfg.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            grid,
            started_unix: unix_now(),
            finished_unix: 0.0,
            wall_seconds: 0.0,
            step_seconds_total: 0.0,
            steps: 0,
            dt: 0.0,
            t_final: 0.0,
            max_rank: 0,
            error: None,
            map_errors: None,
            error_norm: ErrorNorm::for_scenario(cfg.scenario),
            snapshots: Vec::new(),
            exit_status: String::new(),
            exit_code: 0,
        })
    }

    pub fn finish(&mut self, outcome: &Result<RunOutput>) {
        self.finished_unix = unix_now();
        self.wall_seconds = self.finished_unix - self.started_unix;
        match outcome {
            Ok(o) => {
                self.step_seconds_total = o.step_seconds_total;
                self.steps = o.steps;
                self.dt = o.dt;
                self.t_final = o.t_final;
                self.max_rank = o.max_rank;
                self.error = o.error;
                self.map_errors = o.map_errors;
                self.error_norm = o.error_norm;
                self.exit_status = "ok".into();
                self.exit_code = 0;
            }
            Err(e) => {
                self.exit_status = e.to_string();
                self.exit_code = exit_code(e);
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Process exit code for an error: 1 for failures during the run, 2 for bad input.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Unsupported(_) => 2,
        _ => 1,
    }
}

fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Writes `diag.csv`, snapshots and `snapshots.csv` into a run directory.
pub struct RunDirectory {
    dir: PathBuf,
    diag: DiagWriter,
    index: csv::Writer<BufWriter<File>>,
    snapshots: Vec<SnapshotEntry>,
}

impl RunDirectory {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let diag = DiagWriter::create(dir.join("diag.csv"))?;
        let ipath = dir.join("snapshots.csv");
        let file = File::create(&ipath).map_err(|e| Error::io(&ipath, e))?;
        let mut index = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        index
            .write_record(["step", "t", "file"])
            .map_err(|e| csv_err(&ipath, e))?;
        index.flush().map_err(|e| Error::io(&ipath, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            diag,
            index,
            snapshots: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn snapshots(&self) -> &[SnapshotEntry] {
        &self.snapshots
    }

    fn index_file(&mut self, step: usize, t: f64, name: &str) -> Result<()> {
        let p = self.dir.join("snapshots.csv");
        self.index
            .write_record([step.to_string(), format_f64(t), name.to_string()])
            .map_err(|e| csv_err(&p, e))?;
        self.index.flush().map_err(|e| Error::io(&p, e))
    }
}

impl Observer for RunDirectory {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.diag.append(&rec.into())
    }

    fn snapshot(&mut self, step: usize, t: f64, data: &SnapshotData) -> Result<()> {
        let stem = format!("snap_{step:06}");
        let mut files = Vec::new();
        match data {
            SnapshotData::Grid2D(m) => {
                let name = format!("{stem}.lrvs");
                write_lrvs(&self.dir.join(&name), m)?;
                files.push(name);
            }
            SnapshotData::Tensor4D { cut_xv, cut_vv, tensor } => {
                for (suffix, m) in [("x1v1", cut_xv), ("v1v2", cut_vv)] {
                    let name = format!("{stem}_{suffix}.lrvs");
                    write_lrvs(&self.dir.join(&name), m)?;
                    files.push(name);
                }
                let name = format!("{stem}.ht");
                let p = self.dir.join(&name);
                let mut f = File::create(&p).map_err(|e| Error::io(&p, e))?;
                f.write_all(&tensor.to_bytes()).map_err(|e| Error::io(&p, e))?;
                files.push(name);
            }
        }
        for name in &files {
            self.index_file(step, t, name)?;
        }
        self.snapshots.push(SnapshotEntry { step, t, files });
        Ok(())
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("config line {}: expected key = value", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
