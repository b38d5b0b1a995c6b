//! Output files: legacy VTK snapshots, the CSV convergence log and JSON
//! checkpoints.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;
use crate::optimizer::{IterationRecord, OptimizerState};

/// Writes `contents` through a temporary sibling file so that a failed write
/// leaves no partial file behind.
fn write_atomically(path: &Path, contents: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        contents(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Named per-cell and per-point scalar fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtkFields {
    pub cell: Vec<(String, Vec<f64>)>,
    pub point: Vec<(String, Vec<f64>)>,
}

impl VtkFields {
    pub fn cell(&self, name: &str) -> Option<&[f64]> {
        self.cell.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn point(&self, name: &str) -> Option<&[f64]> {
        self.point.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Legacy-VTK ASCII structured grid. Values are written with the shortest
/// representation that parses back to the same `f64`.
pub fn write_vtk(fields: &VtkFields, mesh: &StructuredMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if fields.cell.is_empty() && fields.point.is_empty() {
        return Err(Error::invalid("no fields to write"));
    }
    for (name, v) in &fields.cell {
        if v.len() != mesh.num_elements() {
            return Err(Error::invalid(format!(
                "cell field `{name}` has {} values, mesh has {} elements",
                v.len(),
                mesh.num_elements()
            )));
        }
    }
    for (name, v) in &fields.point {
        if v.len() != mesh.num_nodes() {
            return Err(Error::invalid(format!(
                "point field `{name}` has {} values, mesh has {} nodes",
                v.len(),
                mesh.num_nodes()
            )));
        }
    }
    for (name, _) in fields.cell.iter().chain(&fields.point) {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("invalid field name `{name}`")));
        }
    }
    write_atomically(path, |w| {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "darcy-topopt {}x{}x{}", mesh.nx, mesh.ny, mesh.nz)?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET STRUCTURED_GRID")?;
        writeln!(w, "DIMENSIONS {} {} {}", mesh.nx + 1, mesh.ny + 1, mesh.nz + 1)?;
        writeln!(w, "POINTS {} double", mesh.num_nodes())?;
        for n in 0..mesh.num_nodes() {
            let [x, y, z] = mesh.node_coords(n);
            writeln!(w, "{x} {y} {z}")?;
        }
        let section = |w: &mut BufWriter<fs::File>, kind: &str, count: usize, data: &[(String, Vec<f64>)]| {
            if data.is_empty() {
                return Ok(());
            }
            writeln!(w, "{kind} {count}")?;
            for (name, values) in data {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in values {
                    writeln!(w, "{v}")?;
                }
            }
            Ok::<_, std::io::Error>(())
        };
        section(w, "CELL_DATA", mesh.num_elements(), &fields.cell)?;
        section(w, "POINT_DATA", mesh.num_nodes(), &fields.point)
    })
}

/// Parses a file written by [`write_vtk`]. Returns the point dimensions and the fields.
pub fn read_vtk(path: impl AsRef<Path>) -> Result<([usize; 3], VtkFields)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let tokens: Vec<&str> = text.lines().skip(2).flat_map(str::split_whitespace).collect();
    let mut pos = 0;
    let mut next = || {
        pos += 1;
        tokens
            .get(pos - 1)
            .copied()
            .ok_or_else(|| bad("unexpected end of file"))
    };
    let expect = |word: &str, t: &str| {
        if t == word {
            Ok(())
        } else {
            Err(bad(&format!("expected `{word}`, found `{t}`")))
        }
    };
    for word in ["ASCII", "DATASET", "STRUCTURED_GRID", "DIMENSIONS"] {
        expect(word, next()?)?;
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = next()?.parse().map_err(|_| bad("invalid dimension"))?;
    }
    expect("POINTS", next()?)?;
    let npts: usize = next()?.parse().map_err(|_| bad("invalid point count"))?;
    next()?;
    for _ in 0..3 * npts {
        next()?;
    }
    let mut fields = VtkFields::default();
    let mut current: Option<(bool, usize)> = None;
    while let Ok(t) = next() {
        match t {
            "CELL_DATA" | "POINT_DATA" => {
                let count = next()?.parse().map_err(|_| bad("invalid data count"))?;
                current = Some((t == "CELL_DATA", count));
            }
            "SCALARS" => {
                let (is_cell, count) = current.ok_or_else(|| bad("SCALARS outside a data section"))?;
                let name = next()?.to_string();
                next()?;
                next()?;
                expect("LOOKUP_TABLE", next()?)?;
                next()?;
                let values = (0..count)
                    .map(|_| next()?.parse::<f64>().map_err(|_| bad("invalid value")))
                    .collect::<Result<Vec<_>>>()?;
                if is_cell {
                    fields.cell.push((name, values));
                } else {
                    fields.point.push((name, values));
                }
            }
            other => return Err(bad(&format!("unexpected token `{other}`"))),
        }
    }
    Ok((dims, fields))
}

/// One CSV row of the convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub stage: usize,
    pub q_c: f64,
    pub q_p: f64,
    pub kappa_solid: f64,
    pub objective: f64,
    pub constraint: f64,
    pub newton_steps: usize,
    pub krylov_iterations: usize,
    pub residual_reduction: f64,
    pub discreteness: f64,
    pub wall_seconds: f64,
}

impl From<&IterationRecord> for LogRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            stage: r.stage,
            q_c: r.q_c,
            q_p: r.q_p,
            kappa_solid: r.kappa_solid,
            objective: r.objective,
            constraint: r.constraint,
            newton_steps: r.newton_steps,
            krylov_iterations: r.krylov_iterations,
            residual_reduction: r.residual_reduction,
            discreteness: r.discreteness,
            wall_seconds: r.wall_seconds,
        }
    }
}

const LOG_HEADER: &str = "iteration,stage,q_c,q_p,kappa_solid,objective,constraint,newton_steps,krylov_iterations,residual_reduction,discreteness,wall_seconds";

/// Append-only CSV convergence log.
#[derive(Debug, Clone)]
pub struct LogWriter {
    path: PathBuf,
}

impl LogWriter {
    /// Starts a new log, replacing any existing file.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        fs::write(&path, format!("{LOG_HEADER}\n")).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }

    /// Reopens an existing log, dropping rows at or after `from_iteration`.
    pub fn resume(path: impl Into<PathBuf>, from_iteration: usize) -> Result<Self> {
        let path = path.into();
        let rows: Vec<LogRow> = if path.exists() { read_log(&path)? } else { Vec::new() };
        let w = Self::create(&path)?;
        for r in rows.iter().filter(|r| r.iteration < from_iteration) {
            w.append(r)?;
        }
        Ok(w)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, row: &LogRow) -> Result<()> {
        let numbers = [
            ("q_c", row.q_c),
            ("q_p", row.q_p),
            ("kappa_solid", row.kappa_solid),
            ("objective", row.objective),
            ("constraint", row.constraint),
            ("residual_reduction", row.residual_reduction),
            ("discreteness", row.discreteness),
            ("wall_seconds", row.wall_seconds),
        ];
        if let Some((name, _)) = numbers.iter().find(|(_, v)| v.is_nan()) {
            return Err(Error::invalid(format!(
                "refusing to log NaN in `{name}` at iteration {}",
                row.iteration
            )));
        }
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        out.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
        let line = out.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        f.write_all(&line).map_err(|e| Error::io(&self.path, e))
    }
}

/// Appends one record to the log at `path`, writing the header first if the
/// file does not exist yet.
pub fn write_log_row(record: &IterationRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let w = if path.exists() {
        LogWriter {
            path: path.to_path_buf(),
        }
    } else {
        LogWriter::create(path)?
    };
    w.append(&record.into())
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(&file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if first.trim_end() != LOG_HEADER {
        return Err(Error::Format(format!("{}: unexpected log header", path.display())));
    }
    csv::Reader::from_path(path)
        .map_err(|e| Error::Format(e.to_string()))?
        .deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Restart file: design, state, MMA history and iteration counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub problem: String,
    pub resolution: [usize; 3],
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn new(problem: &str, resolution: [usize; 3], optimizer: OptimizerState) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            problem: problem.to_string(),
            resolution,
            optimizer,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_atomically(path, |w| {
            serde_json::to_writer(&mut *w, self).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if cp.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: checkpoint format {} is not supported (expected {})",
                path.display(),
                cp.format_version,
                CHECKPOINT_FORMAT_VERSION
            )));
        }
        Ok(cp)
    }
}
