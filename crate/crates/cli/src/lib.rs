//! Runner behind the `kglab` binary: configuration, experiments, outputs and
//! the suite driver.

pub mod config;
pub mod experiments;
pub mod output;
pub mod suite;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use config::Prepared;
use output::{write_json, ErrorRecord, Stamp};

pub const OUT_ROOT_ENV: &str = "KGLAB_OUT_ROOT";
pub const MANIFEST_SCHEMA: &str = "kglab.manifest.v1";

/// Exit status for configuration and validation failures.
pub const EXIT_INVALID: i32 = 2;
/// Exit status for failures during a run, or failed criteria in a suite.
pub const EXIT_FAILED: i32 = 1;

/// Root for relative output paths: `KGLAB_OUT_ROOT` or the working directory.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

pub fn resolve_out(root: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Map<String, Value>,
}

fn io_err(stage: &'static str, e: std::io::Error) -> ErrorRecord {
    ErrorRecord { code: "IO_ERROR".into(), message: e.to_string(), stage }
}

fn write_snapshots(path: &Path, times: &[f64], snaps: &[kglab_core::state::StatePair]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(b"KGSNAP01")?;
    let n = snaps.first().map_or(0, |s| s.len()) as u64;
    f.write_all(&n.to_le_bytes())?;
    f.write_all(&(snaps.len() as u64).to_le_bytes())?;
    for (t, s) in times.iter().zip(snaps) {
        f.write_all(&t.to_le_bytes())?;
        for v in s.u.iter().chain(&s.ut) {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()
}

/// Runs a prepared configuration into `dir`: CSV tables, optional snapshots
/// and `manifest.json`. Errors are also written to `dir/error.json`.
pub fn run_prepared(p: &Prepared, dir: &Path) -> Result<RunReport, ErrorRecord> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    std::fs::create_dir_all(dir).map_err(|e| io_err("output", e))?;
    let outcome = match experiments::run(p) {
        Ok(o) => o,
        Err(e) => {
            let rec = ErrorRecord { code: e.code().into(), message: e.to_string(), stage: "run" };
            let _ = std::fs::write(dir.join("error.json"), rec.to_json() + "\n");
            return Err(rec);
        }
    };
    let r = &p.config.run;
    let stamp = Stamp { sigma: r.sigma, nu: r.nu, kappa: r.kappa, eps: r.eps, dt: r.dt };
    let mut outputs = Vec::new();
    let mut listed = Vec::new();
    for t in &outcome.tables {
        let path = t.write(dir, Some(&stamp)).map_err(|e| io_err("output", e))?;
        listed.push(json!({ "file": format!("{}.csv", t.name), "schema_id": t.schema_id(), "rows": t.rows.len() }));
        outputs.push(path);
    }
    if let Some((times, snaps)) = &outcome.snapshots {
        let path = dir.join("snapshots.bin");
        write_snapshots(&path, times, snaps).map_err(|e| io_err("output", e))?;
        listed.push(json!({ "file": "snapshots.bin", "format": "KGSNAP01: n u64, count u64, then per snapshot t, u[n], ut[n] as f64 LE", "rows": snaps.len() }));
        outputs.push(path);
    }
    let defaults: serde_json::Map<String, Value> = p.defaults_applied.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
    let manifest = json!({
        "schema_id": MANIFEST_SCHEMA,
        "tool": { "name": "kglab", "version": env!("CARGO_PKG_VERSION") },
        "experiment": p.config.experiment.name(),
        "seed": p.config.seed,
        "config": p.config,
        "defaults_applied": defaults,
        "warnings": p.warnings,
        "outputs": listed,
        "results": outcome.summary,
        "timing": { "started_unix": started, "wall_seconds": clock.elapsed().as_secs_f64() },
    });
    let mpath = dir.join("manifest.json");
    write_json(&mpath, &manifest).map_err(|e| io_err("output", e))?;
    outputs.push(mpath);
    Ok(RunReport { dir: dir.to_path_buf(), outputs, summary: outcome.summary })
}
