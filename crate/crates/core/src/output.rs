//! File outputs: the metrics CSV, field snapshots as CSV matrices, and
//! optional 8-bit PGM heatmaps.
//!
//! Snapshot CSVs hold `ny` rows of `nx` values, the first row being the cells
//! nearest `y_min`. PGM images put `y_max` at the top.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::metrics::MetricsRecord;

pub const METRICS_HEADER: &str =
    "t,estimator,l2_err,grad_l2_err,h1_err,mass_dev,min_val,consensus_track_err,input_variation,connected";

/// Largest mass deviation tolerated in a written snapshot.
const SNAPSHOT_MASS_TOL: f64 = 1e-6;

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Formats one CSV row (no trailing newline).
pub fn metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.t,
        r.estimator,
        r.l2_err,
        r.grad_l2_err,
        r.h1_err,
        r.mass_dev,
        r.min_val,
        opt(r.consensus_track_err),
        opt(r.input_variation),
        opt(r.connected),
    )
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        if !r.is_finite() {
            return Err(Error::health(format!(
                "non-finite metrics for {} at t = {}",
                r.estimator, r.t
            )));
        }
        writeln!(w, "{}", metrics_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a metrics CSV written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::config("metrics", format!("{} has an unexpected header", path.display())));
    }
    let bad = |line: &str| Error::config("metrics", format!("malformed row {line:?} in {}", path.display()));
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 10 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let opt_num = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(MetricsRecord {
                t: num(cols[0])?,
                estimator: cols[1].to_string(),
                l2_err: num(cols[2])?,
                grad_l2_err: num(cols[3])?,
                h1_err: num(cols[4])?,
                mass_dev: num(cols[5])?,
                min_val: num(cols[6])?,
                consensus_track_err: opt_num(cols[7])?,
                input_variation: opt_num(cols[8])?,
                connected: match cols[9] {
                    "" => None,
                    "true" => Some(true),
                    "false" => Some(false),
                    _ => return Err(bad(line)),
                },
            })
        })
        .collect()
}

pub fn snapshot_path(run_dir: &Path, estimator: &str, step: usize, ext: &str) -> PathBuf {
    run_dir.join(format!("{estimator}_t{step}.{ext}"))
}

/// Writes `field` as a CSV matrix after checking it is finite with unit mass.
pub fn write_snapshot_csv(path: &Path, field: &ScalarField) -> Result<()> {
    if !field.is_finite() {
        return Err(Error::DegenerateField(format!("refusing to write non-finite {}", path.display())));
    }
    let mass = field.mass();
    if (mass - 1.0).abs() > SNAPSHOT_MASS_TOL {
        return Err(Error::DegenerateField(format!(
            "refusing to write {}: mass {mass}",
            path.display()
        )));
    }
    let g = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    for row in field.values().chunks_exact(g.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV matrix back into row-major values.
pub fn read_snapshot_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .map(|line| {
            line.split(',')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::config("snapshot", format!("bad value {s:?} in {}", path.display())))
                })
                .collect()
        })
        .collect()
}

/// Binary 8-bit PGM, min–max scaled; a constant field maps to mid-gray.
pub fn pgm_bytes(field: &ScalarField) -> Vec<u8> {
    let g = field.grid();
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", g.nx, g.ny).into_bytes();
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let v = field.at(i, j);
            let level = if span > 0.0 { ((v - lo) / span * 255.0).round() } else { 128.0 };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, pgm_bytes(field))?;
    Ok(())
}

/// Exclusive writer for one run directory.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    pgm: bool,
}

impl RunWriter {
    pub fn create(dir: impl Into<PathBuf>, pgm: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, pgm })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn snapshot(&self, estimator: &str, step: usize, field: &ScalarField) -> Result<()> {
        write_snapshot_csv(&snapshot_path(&self.dir, estimator, step, "csv"), field)?;
        if self.pgm {
            write_pgm(&snapshot_path(&self.dir, estimator, step, "pgm"), field)?;
        }
        Ok(())
    }

    pub fn metrics(&self, records: &[MetricsRecord]) -> Result<()> {
        write_metrics_csv(&self.dir.join("metrics.csv"), records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn record(estimator: &str) -> MetricsRecord {
        MetricsRecord {
            t: 0.1,
            estimator: estimator.into(),
            l2_err: 0.25,
            grad_l2_err: 1.5,
            h1_err: 1.75,
            mass_dev: 1e-15,
            min_val: -0.0,
            consensus_track_err: None,
            input_variation: None,
            connected: None,
        }
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let recs = vec![record("kde"), record("local_3").with_consensus(0.5, 2.0, false)];
        write_metrics_csv(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(METRICS_HEADER));
        assert!(text.contains("\n0.1,kde,0.25,1.5,1.75,0.000000000000001,-0,,,\n"));
        assert_eq!(read_metrics_csv(&path).unwrap(), recs);
    }

    #[test]
    fn snapshot_layout_and_checks() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::unit(4, 3).unwrap();
        let f = ScalarField::from_fn(grid, |x| 0.5 + x[0]);
        let path = dir.path().join("f.csv");
        write_snapshot_csv(&path, &f).unwrap();
        let rows = read_snapshot_csv(&path).unwrap();
        assert_eq!((rows.len(), rows[0].len()), (3, 4));
        assert_eq!(rows[1][2], f.at(2, 1));
        assert!(write_snapshot_csv(&path, &f.scaled(2.0)).is_err());
    }

    #[test]
    fn pgm_scaling() {
        let grid = GridSpec::unit(3, 3).unwrap();
        let f = ScalarField::from_fn(grid, |x| x[1]);
        let bytes = pgm_bytes(&f);
        let header = b"P5\n3 3\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[255, 255, 255, 128, 128, 128, 0, 0, 0]);
        let flat = pgm_bytes(&ScalarField::constant(grid, 1.0));
        assert!(flat[header.len()..].iter().all(|b| *b == 128));
    }
}
