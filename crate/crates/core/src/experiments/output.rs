//! CSV and JSON emission.
//!
//! Floats are written with 17 significant digits so that reading a file back
//! reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::engine::{Trajectory, TrajectoryRow};
use crate::error::{Error, Result};

use super::aggregate::AggregateSeries;

pub const TRAJECTORY_HEADER: [&str; 5] = ["k", "draws", "total_energy", "tvd", "cumulative_loss"];
pub const AGGREGATE_HEADER: [&str; 8] = [
    "k",
    "mean_total_energy",
    "mean_tvd",
    "median_tvd",
    "q1_tvd",
    "q3_tvd",
    "mean_cumulative_loss",
    "tvd_outliers",
];
pub const EFFICIENCY_HEADER: [&str; 2] = ["remaining_energy", "tvd"];

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// One row per useful interaction.
pub fn write_trajectory_csv(trajectory: &Trajectory, path: &Path) -> Result<()> {
    write_trajectory_rows(&trajectory.rows, path)
}

pub fn write_trajectory_rows(rows: &[TrajectoryRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.draws.to_string(),
            fmt_f64(r.total_energy),
            fmt_f64(r.tvd),
            fmt_f64(r.cumulative_loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::Io(format!("unexpected trajectory header {header:?}")));
    }
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|e| Error::Io(format!("bad number '{}': {e}", &rec[i])))
            };
            let int = |i: usize| -> Result<u64> {
                rec[i]
                    .parse()
                    .map_err(|e| Error::Io(format!("bad integer '{}': {e}", &rec[i])))
            };
            Ok(TrajectoryRow {
                k: int(0)?,
                draws: int(1)?,
                total_energy: num(2)?,
                tvd: num(3)?,
                cumulative_loss: num(4)?,
            })
        })
        .collect()
}

pub fn write_aggregate_csv(series: &AggregateSeries, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in &series.rows {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.total_energy.mean),
            fmt_f64(r.tvd.mean),
            fmt_f64(r.tvd.median),
            fmt_f64(r.tvd.q1),
            fmt_f64(r.tvd.q3),
            fmt_f64(r.cumulative_loss.mean),
            r.tvd.outliers.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_efficiency_csv(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(EFFICIENCY_HEADER)?;
    for &(e, t) in points {
        w.write_record([fmt_f64(e), fmt_f64(t)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_efficiency_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Io(format!("bad number '{s}': {e}")))
            };
            Ok((parse(&rec[0])?, parse(&rec[1])?))
        })
        .collect()
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
