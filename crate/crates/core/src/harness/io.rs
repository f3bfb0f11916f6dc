use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::stats::{aggregate, first_crossing, median_crossing, Crossing, MedianCrossing};
use crate::error::{Error, Result};
use crate::learners::LossTrajectory;
use crate::lqr::{GainErrorTrajectory, Variant};

pub const LOSS_HEADER: [&str; 5] = ["algo", "m", "seed", "iteration", "loss"];
pub const GAIN_HEADER: [&str; 4] = ["variant", "seed", "step", "gain_error"];

/// Either trajectory schema, recognized by its header.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryTable {
    Loss(Vec<LossTrajectory>),
    Gain(Vec<GainErrorTrajectory>),
}

fn csv_err(row: usize, msg: impl std::fmt::Display) -> Error {
    Error::TrajectoryCsv(format!("row {row}: {msg}"))
}

fn parse_field<T: std::str::FromStr>(row: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| csv_err(row, format!("bad {name} {s:?}")))
}

/// Rows of one trajectory must be contiguous with indices `0, 1, 2, …`.
fn check_index(row: usize, expected: usize, got: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(csv_err(
            row,
            format!("iteration {got} out of sequence, expected {expected}"),
        ))
    }
}

pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<TrajectoryTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    if header == LOSS_HEADER {
        read_loss_rows(rdr).map(TrajectoryTable::Loss)
    } else if header == GAIN_HEADER {
        read_gain_rows(rdr).map(TrajectoryTable::Gain)
    } else {
        Err(Error::TrajectoryCsv(format!("unrecognized header {header:?}")))
    }
}

fn read_loss_rows<R: Read>(mut rdr: csv::Reader<R>) -> Result<Vec<LossTrajectory>> {
    let mut out: Vec<LossTrajectory> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != LOSS_HEADER.len() {
            return Err(csv_err(
                row,
                format!("{} fields, expected {}", rec.len(), LOSS_HEADER.len()),
            ));
        }
        let algo = &rec[0];
        if !matches!(algo, "vanilla" | "speedy" | "aql") {
            return Err(csv_err(row, format!("unknown algo {algo:?}")));
        }
        let m = if rec[1].is_empty() {
            None
        } else {
            Some(parse_field::<f64>(row, "m", &rec[1])?)
        };
        let seed: u64 = parse_field(row, "seed", &rec[2])?;
        let k: usize = parse_field(row, "iteration", &rec[3])?;
        let loss: f64 = parse_field(row, "loss", &rec[4])?;
        let same = out
            .last()
            .is_some_and(|t| t.algo == algo && t.seed == seed && t.m.map(f64::to_bits) == m.map(f64::to_bits));
        if same && k != 0 {
            let t = out.last_mut().unwrap();
            check_index(row, t.losses.len(), k)?;
            t.losses.push(loss);
        } else {
            check_index(row, 0, k)?;
            out.push(LossTrajectory {
                algo: algo.to_string(),
                m,
                seed,
                losses: vec![loss],
            });
        }
    }
    Ok(out)
}

fn read_gain_rows<R: Read>(mut rdr: csv::Reader<R>) -> Result<Vec<GainErrorTrajectory>> {
    let mut out: Vec<GainErrorTrajectory> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != GAIN_HEADER.len() {
            return Err(csv_err(
                row,
                format!("{} fields, expected {}", rec.len(), GAIN_HEADER.len()),
            ));
        }
        let variant: Variant = rec[0].parse().map_err(|e: Error| csv_err(row, e))?;
        let seed: u64 = parse_field(row, "seed", &rec[1])?;
        let k: usize = parse_field(row, "step", &rec[2])?;
        let err: f64 = parse_field(row, "gain_error", &rec[3])?;
        let same = out.last().is_some_and(|t| t.variant == variant && t.seed == seed);
        if same && k != 0 {
            let t = out.last_mut().unwrap();
            check_index(row, t.errors.len(), k)?;
            t.errors.push(err);
        } else {
            check_index(row, 0, k)?;
            out.push(GainErrorTrajectory {
                variant,
                seed,
                errors: vec![err],
            });
        }
    }
    Ok(out)
}

/// Per-seed curves of one `(algo, m)` or `(paql, variant)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCurves {
    pub algo: String,
    pub m_or_variant: Option<String>,
    pub seeds: Vec<u64>,
    pub curves: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    /// Groups trajectories into cells in order of first appearance.
    pub fn cells(&self) -> Vec<CellCurves> {
        let mut cells: Vec<CellCurves> = Vec::new();
        let mut add = |algo: &str, label: Option<String>, seed: u64, curve: &[f64]| match cells
            .iter_mut()
            .find(|c| c.algo == algo && c.m_or_variant == label)
        {
            Some(c) => {
                c.seeds.push(seed);
                c.curves.push(curve.to_vec());
            }
            None => cells.push(CellCurves {
                algo: algo.to_string(),
                m_or_variant: label,
                seeds: vec![seed],
                curves: vec![curve.to_vec()],
            }),
        };
        match self {
            TrajectoryTable::Loss(ts) => {
                for t in ts {
                    add(&t.algo, t.m.map(|m| m.to_string()), t.seed, &t.losses);
                }
            }
            TrajectoryTable::Gain(ts) => {
                for t in ts {
                    add("paql", Some(t.variant.name().to_string()), t.seed, &t.errors);
                }
            }
        }
        cells
    }
}

/// One row of a summary or threshold table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub algo: String,
    pub m_or_variant: Option<String>,
    pub num_seeds: usize,
    pub final_mean_loss: f64,
    pub final_std_loss: f64,
    /// First iterate at which the across-seed mean reaches each threshold.
    pub threshold_crossings: Vec<Crossing>,
    /// Median over seeds of each seed's own first crossing.
    pub median_seed_crossings: Vec<MedianCrossing>,
}

pub fn summarize_cell(cell: &CellCurves, thresholds: &[f64]) -> Result<CellSummary> {
    let agg = aggregate(&cell.curves)?;
    Ok(CellSummary {
        algo: cell.algo.clone(),
        m_or_variant: cell.m_or_variant.clone(),
        num_seeds: cell.curves.len(),
        final_mean_loss: *agg.mean.last().unwrap_or(&f64::NAN),
        final_std_loss: *agg.std.last().unwrap_or(&f64::NAN),
        threshold_crossings: thresholds
            .iter()
            .map(|&t| Crossing {
                threshold: t,
                iterate: first_crossing(&agg.mean, t),
            })
            .collect(),
        median_seed_crossings: thresholds
            .iter()
            .map(|&t| MedianCrossing {
                threshold: t,
                median_iterate: median_crossing(&cell.curves, t),
            })
            .collect(),
    })
}

/// Per-cell first crossing of the mean curve at `threshold`.
pub fn threshold_table(cells: &[CellCurves], threshold: f64) -> Result<Vec<CellSummary>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold} must be positive"
        )));
    }
    cells.iter().map(|c| summarize_cell(c, &[threshold])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub task: String,
    pub cells: Vec<CellSummary>,
}

/// `dir/run.csv` → `dir/run.summary.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.summary.json"))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
