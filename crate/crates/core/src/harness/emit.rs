//! Curve and summary files for plotting.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use super::train::write_json;
use crate::error::{invalid, Error, Result};

pub const CURVE_HEADER: [&str; 10] = [
    "omega",
    "psnr_mean",
    "psnr_std",
    "ssim_mean",
    "ssim_std",
    "lpips_mean",
    "lpips_std",
    "aaoi_mean",
    "fw_mean",
    "fw_std",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub policy: String,
    pub traffic: String,
    pub replications: usize,
    pub argmin_omega: u64,
    pub fw_min: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub curves: Vec<CurveSummary>,
}

pub fn curve_file_name(r: &SweepResult) -> String {
    format!("curves_{}_{}.csv", r.policy.name(), r.traffic)
}

pub fn sweep_file_name(r: &SweepResult) -> String {
    format!("sweep_{}_{}.json", r.policy.name(), r.traffic)
}

/// Write one `curves_<policy>_<traffic>.csv` per result plus
/// `summary.json`. Returns the paths written.
pub fn emit_curves(results: &[SweepResult], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(invalid("no sweep results to emit"));
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut curves = Vec::new();
    for r in results {
        let name = curve_file_name(r);
        let path = out_dir.join(&name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(CURVE_HEADER)?;
        for p in &r.points {
            let row = [
                p.psnr.mean,
                p.psnr.std,
                p.ssim.mean,
                p.ssim.std,
                p.lpips.mean,
                p.lpips.std,
                p.aaoi.mean,
                p.fw.mean,
                p.fw.std,
            ];
            let mut fields = vec![p.omega.to_string()];
            fields.extend(row.iter().map(f64::to_string));
            w.write_record(&fields)?;
        }
        w.flush()?;
        written.push(path);
        curves.push(CurveSummary {
            policy: r.policy.name().to_string(),
            traffic: r.traffic.clone(),
            replications: r.replications,
            argmin_omega: r.argmin_omega,
            fw_min: r.argmin().fw.mean,
            file: name,
        });
    }
    let summary = out_dir.join("summary.json");
    write_json(&summary, &Summary { curves })?;
    written.push(summary);
    Ok(written)
}

/// Save the full result as `sweep_<policy>_<traffic>.json` in `dir`.
pub fn write_sweep(r: &SweepResult, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(sweep_file_name(r));
    write_json(&path, r)?;
    Ok(path)
}

/// Load every `sweep_*.json` in `dir`, in file-name order.
pub fn load_sweeps(dir: &Path) -> Result<Vec<SweepResult>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("sweep_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no sweep_*.json files in {}", dir.display()),
        )));
    }
    paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect()
}
