//! File formats: single-shot CSV, histogram CSV with JSON edge sidecar,
//! calibration and funnel inputs, profile exports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact and repeated runs are byte-identical.
//! Readers report the offending line number on malformed input.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funnel::FunnelMap;
use crate::sim::{Branch, Histogram2D, ShotMatrix};

fn parse_f64(path: &Path, line_no: usize, field: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: line_no,
        message: format!("bad {field}: {raw:?}"),
    })
}

fn split2(path: &Path, line_no: usize, line: &str) -> Result<(String, String)> {
    let mut parts = line.split(',');
    let a = parts.next();
    let b = parts.next();
    match (a, b, parts.next()) {
        (Some(a), Some(b), None) => Ok((a.to_string(), b.to_string())),
        _ => Err(Error::Parse {
            path: path.display().to_string(),
            line: line_no,
            message: "expected exactly 2 comma-separated fields".to_string(),
        }),
    }
}

/// Writes shot records as `detuning_ueV,current_pA`.
pub fn write_shots_csv(path: &Path, shots: &ShotMatrix) -> Result<()> {
    let mut out = String::with_capacity(shots.records.len() * 24);
    out.push_str("detuning_ueV,current_pA\n");
    for r in &shots.records {
        writeln!(out, "{},{}", r.detuning_uev, r.current_pa).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Oracle sidecar: generation-truth branch labels alongside each record.
pub fn write_shots_oracle_csv(path: &Path, shots: &ShotMatrix) -> Result<()> {
    let mut out = String::with_capacity(shots.records.len() * 32);
    out.push_str("detuning_ueV,current_pA,true_branch\n");
    for r in &shots.records {
        writeln!(out, "{},{},{}", r.detuning_uev, r.current_pa, r.branch).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads `detuning_ueV,current_pA` records.
pub fn read_shots_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "detuning_ueV,current_pA" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: "empty file".to_string(),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (a, b) = split2(path, line_no, line)?;
        records.push((
            parse_f64(path, line_no, "detuning_ueV", &a)?,
            parse_f64(path, line_no, "current_pA", &b)?,
        ));
    }
    if records.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "no data rows".to_string(),
        });
    }
    Ok(records)
}

/// Reads the oracle sidecar produced by [`write_shots_oracle_csv`].
pub fn read_shots_oracle_csv(path: &Path) -> Result<Vec<(f64, f64, Branch)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: "expected 3 fields".to_string(),
            });
        }
        let branch = match fields[2].trim() {
            "singlet" => Branch::Singlet,
            "triplet" => Branch::Triplet,
            other => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: line_no,
                    message: format!("bad branch {other:?}"),
                })
            }
        };
        out.push((
            parse_f64(path, line_no, "detuning_ueV", fields[0])?,
            parse_f64(path, line_no, "current_pA", fields[1])?,
            branch,
        ));
    }
    Ok(out)
}

/// JSON sidecar holding the histogram's axis vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramSidecar {
    #[serde(rename = "detuning_ueV")]
    pub detuning_uev: Vec<f64>,
    #[serde(rename = "current_edges_pA")]
    pub current_edges_pa: Vec<f64>,
}

/// Writes the counts matrix (one row per detuning column) and the axis
/// sidecar JSON.
pub fn write_histogram(csv_path: &Path, sidecar_path: &Path, hist: &Histogram2D) -> Result<()> {
    let mut out = String::new();
    for row in &hist.counts {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(",")).expect("string write");
    }
    std::fs::write(csv_path, out)?;
    let sidecar = HistogramSidecar {
        detuning_uev: hist.detuning_uev.clone(),
        current_edges_pa: hist.current_edges_pa.clone(),
    };
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a histogram written by [`write_histogram`].
pub fn read_histogram(csv_path: &Path, sidecar_path: &Path) -> Result<Histogram2D> {
    let sidecar: HistogramSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let text = std::fs::read_to_string(csv_path)?;
    let mut counts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|cell| parse_f64(csv_path, idx + 1, "count", cell))
            .collect();
        counts.push(row?);
    }
    let hist = Histogram2D {
        detuning_uev: sidecar.detuning_uev,
        current_edges_pa: sidecar.current_edges_pa,
        counts,
    };
    hist.validate()?;
    Ok(hist)
}

/// Reads a `t_mc_K,width_V` lever-arm calibration sweep.
pub fn read_temperature_sweep_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != "t_mc_K,width_V" {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    message: format!("unexpected header {:?}", line),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = split2(path, line_no, line)?;
        points.push((
            parse_f64(path, line_no, "t_mc_K", &a)?,
            parse_f64(path, line_no, "width_V", &b)?,
        ));
    }
    Ok(points)
}

/// Grid sidecar of a funnel-map matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunnelSidecar {
    #[serde(rename = "b_grid_uT")]
    pub b_grid_ut: Vec<f64>,
    #[serde(rename = "epsilon_grid_ueV")]
    pub epsilon_grid_uev: Vec<f64>,
}

/// Writes a funnel map as a probability matrix (row per field value) plus a
/// grid sidecar.
pub fn write_funnel_map(csv_path: &Path, sidecar_path: &Path, map: &FunnelMap) -> Result<()> {
    let mut out = String::new();
    for row in &map.probability {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(",")).expect("string write");
    }
    std::fs::write(csv_path, out)?;
    let sidecar = FunnelSidecar {
        b_grid_ut: map.b_grid_ut.clone(),
        epsilon_grid_uev: map.epsilon_grid_uev.clone(),
    };
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a funnel map written by [`write_funnel_map`].
pub fn read_funnel_map(csv_path: &Path, sidecar_path: &Path) -> Result<FunnelMap> {
    let sidecar: FunnelSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let text = std::fs::read_to_string(csv_path)?;
    let mut probability = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|cell| parse_f64(csv_path, idx + 1, "probability", cell))
            .collect();
        probability.push(row?);
    }
    let map = FunnelMap {
        b_grid_ut: sidecar.b_grid_ut,
        epsilon_grid_uev: sidecar.epsilon_grid_uev,
        probability,
    };
    map.validate()?;
    Ok(map)
}

/// Writes a steady-state profile as `epsilon_ueV,p20`.
pub fn write_profile_csv(path: &Path, grid: &[f64], p20: &[f64]) -> Result<()> {
    let mut out = String::from("epsilon_ueV,p20\n");
    for (e, p) in grid.iter().zip(p20) {
        writeln!(out, "{e},{p}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}
