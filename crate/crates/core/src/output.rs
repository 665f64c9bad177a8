//! Machine-readable artifacts: CSV tables with round-trip float precision,
//! canonical configuration hashing, and run manifests.

use crate::dynamics::Trajectory;
use crate::spectrum::{Regime, SpectrumSlice};
use crate::sweep::{SweepPoint, SweepResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// 17 significant decimal digits: enough for exact f64 round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64, OutputError> {
    s.parse::<f64>().map_err(|_| OutputError::Malformed(format!("bad float {s:?}")))
}

fn regime_str(r: Regime) -> &'static str {
    match r {
        Regime::I => "I",
        Regime::II => "II",
        Regime::III => "III",
    }
}

fn parse_regime(s: &str) -> Result<Regime, OutputError> {
    match s {
        "I" => Ok(Regime::I),
        "II" => Ok(Regime::II),
        "III" => Ok(Regime::III),
        _ => Err(OutputError::Malformed(format!("bad regime {s:?}"))),
    }
}

pub const SWEEP_HEADER: &str =
    "ix,iw,x0,omega_c,delta,regime,tf_opt,infidelity,purity,monotone_window,failed,error";

/// One row per grid point, row-major, fixed column order.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::with_capacity(result.points.len() * 140 + 128);
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for p in &result.points {
        let error = p
            .error
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n', '\r'], ";");
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.ix,
            p.iw,
            fmt_f64(p.x0),
            fmt_f64(p.omega_c),
            fmt_f64(p.delta),
            regime_str(p.regime),
            fmt_f64(p.tf_opt),
            fmt_f64(p.infidelity),
            fmt_f64(p.purity_bar),
            p.monotone_window,
            p.failed,
            error,
        ));
    }
    s
}

/// Inverse of [`sweep_csv`]; tolerant of a truncated last line so a file
/// cut off mid-write can still seed a resumed run.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepPoint>, OutputError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SWEEP_HEADER => {}
        other => return Err(OutputError::Malformed(format!("bad header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            // truncated tail row; ignore it and everything after
            break;
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|_| OutputError::Malformed(format!("bad index {s:?}")))
        };
        let parse_bool = |s: &str| match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(OutputError::Malformed(format!("bad bool {s:?}"))),
        };
        rows.push(SweepPoint {
            ix: parse_usize(f[0])?,
            iw: parse_usize(f[1])?,
            x0: parse_f64(f[2])?,
            omega_c: parse_f64(f[3])?,
            delta: parse_f64(f[4])?,
            regime: parse_regime(f[5])?,
            tf_opt: parse_f64(f[6])?,
            infidelity: parse_f64(f[7])?,
            purity_bar: parse_f64(f[8])?,
            monotone_window: parse_bool(f[9])?,
            failed: parse_bool(f[10])?,
            error: if f[11].is_empty() { None } else { Some(f[11].to_string()) },
        });
    }
    Ok(rows)
}

/// Branch-tracked eigenvalue table; `reference` adds the decoupled (x0 = 0)
/// branches as extra columns.
pub fn spectrum_csv(slices: &[SpectrumSlice], reference: Option<&[SpectrumSlice]>) -> String {
    let n = slices.first().map_or(0, |s| s.eigenvalues.len());
    let mut s = String::from("t");
    for k in 0..n {
        s.push_str(&format!(",e{k}"));
    }
    if reference.is_some() {
        for k in 0..n {
            s.push_str(&format!(",ref{k}"));
        }
    }
    s.push_str(",degenerate\n");
    for (i, sl) in slices.iter().enumerate() {
        s.push_str(&fmt_f64(sl.t));
        for e in &sl.eigenvalues {
            s.push(',');
            s.push_str(&fmt_f64(*e));
        }
        if let Some(rf) = reference {
            for e in &rf[i].eigenvalues {
                s.push(',');
                s.push_str(&fmt_f64(*e));
            }
        }
        s.push_str(&format!(",{}\n", sl.degenerate_flag));
    }
    s
}

/// P(t), purity, second Renyi entropy and norm defect; `baseline` appends
/// the decoupled (x0 = 0) transition probability.
pub fn trajectory_csv(traj: &Trajectory, baseline: Option<&Trajectory>) -> String {
    let mut s = String::from("t,p,purity,renyi2,norm_defect");
    if baseline.is_some() {
        s.push_str(",p_baseline");
    }
    s.push('\n');
    for i in 0..traj.times.len() {
        s.push_str(&format!(
            "{},{},{},{},{}",
            fmt_f64(traj.times[i]),
            fmt_f64(traj.p_of_t[i]),
            fmt_f64(traj.purity_of_t[i]),
            fmt_f64(traj.renyi_of_t[i]),
            fmt_f64(traj.norm_defect[i]),
        ));
        if let Some(b) = baseline {
            s.push(',');
            s.push_str(&fmt_f64(b.p_of_t[i]));
        }
        s.push('\n');
    }
    s
}

/// Canonical form: serde_json objects are BTreeMaps, so serialization is
/// key-sorted and independent of the original key order.
pub fn canonical_json(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("JSON value serializes")
}

/// Hex SHA-256 of the canonical serialization.
pub fn config_hash(config: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(canonical_json(config).as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reproducibility record written alongside every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Resolved flat configuration (defaults, file and flags merged).
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub created_utc: String,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        let config_hash = config_hash(&config);
        Self {
            tool: "lzsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config,
            config_hash,
            seed,
            created_utc: chrono::Utc::now().to_rfc3339(),
            wall_seconds: 0.0,
        }
    }
}

/// `foo.csv` -> `foo.manifest.json` next to the output file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}.manifest.json"))
}

/// Write data plus its manifest; the manifest goes second so its presence
/// implies the data file is complete.
pub fn write_with_manifest(
    out: &Path,
    data: &str,
    manifest: &RunManifest,
) -> Result<(), OutputError> {
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(out, data)?;
    let mpath = manifest_path(out);
    std::fs::write(mpath, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}
