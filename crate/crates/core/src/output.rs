//! Plain-text run outputs: the energy series, phase-space snapshots, sweep
//! tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{Histogram, Snapshot, V_MIN};
use crate::driver::{EnergyRow, RunOutput, Scenario};
use crate::error::Result;

pub const MANIFEST_SCHEMA: &str = "hdp-run/1";

pub fn energy_series_csv(rows: &[EnergyRow]) -> String {
    let mut s = String::from("step,t,E_norm_sq,N_p,N_n,N_c,wall_s\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:e},{},{},{},{}", r.step, r.t, r.e_norm_sq, r.n_p, r.n_n, r.n_c, r.wall_s);
    }
    s
}

/// Bins are labelled by their centers: `x_bin` is the cell center and
/// `v1_bin` the velocity-bin center.
pub fn snapshot_csv(snap: &Snapshot, dx: f64) -> String {
    let n_v = snap.maxwellian.len() / snap.n_x.max(1);
    let dv = Histogram::dv();
    let mut s = String::from("x_bin,v1_bin,M_value,fd_pos,fd_neg,f_total\n");
    for k in 0..snap.n_x {
        for b in 0..n_v {
            let i = k * n_v + b;
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e}",
                (k as f64 + 0.5) * dx,
                V_MIN + (b as f64 + 0.5) * dv,
                snap.maxwellian[i],
                snap.fd_pos[i],
                snap.fd_neg[i],
                snap.total[i]
            );
        }
    }
    s
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_{t}.csv")
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'a str,
    version: &'a str,
    scenario: &'a Scenario,
    dt: f64,
    n_steps: usize,
    files: Vec<String>,
}

/// Writes `energy_series.csv`, one `snapshot_{t}.csv` per requested time and
/// `manifest.json`. Returns the written paths.
pub fn write_run(dir: &Path, scenario: &Scenario, out: &RunOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let series = dir.join("energy_series.csv");
    fs::write(&series, energy_series_csv(&out.series))?;
    written.push(series);
    for (t, snap) in &out.snapshots {
        let p = dir.join(snapshot_file_name(*t));
        fs::write(&p, snapshot_csv(snap, out.final_state.grid.dx))?;
        written.push(p);
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        version: env!("CARGO_PKG_VERSION"),
        scenario,
        dt: out.final_state.dt,
        n_steps: out.final_state.step,
        files: written.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect(),
    };
    let p = dir.join("manifest.json");
    fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n")?;
    written.push(p);
    Ok(written)
}

/// One line of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub param: f64,
    pub error: f64,
    pub wall_s: f64,
}

/// `param,error,wall_s` rows (with a `label` column first) and a footer row
/// per fitted slope.
pub fn sweep_csv(rows: &[SweepRow], slopes: &[(String, f64)]) -> String {
    let mut s = String::from("label,param,error,wall_s\n");
    for r in rows {
        let _ = writeln!(s, "{},{:e},{:e},{}", r.label, r.param, r.error, r.wall_s);
    }
    for (label, slope) in slopes {
        let _ = writeln!(s, "# fitted_slope,{label},{slope}");
    }
    s
}
