//! Suite manifests: a list of scenario configs plus optional acceptance
//! criteria, run in parallel into one summary table.
//!
//! ```toml
//! configs = ["spectrum.toml", "scattering.toml"]   # relative to this file
//! criteria = [1, 2, 3]                            # optional
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use kglab_core::criteria::{Suite as CriteriaSuite, TITLES};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{self, ConfigError, Prepared};
use crate::output::{write_json, Table};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    #[serde(default)]
    pub configs: Vec<String>,
    #[serde(default)]
    pub criteria: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub entry: String,
    pub kind: &'static str,
    pub status: &'static str,
    pub code: String,
    pub detail: String,
}

impl SummaryRow {
    pub fn ok(&self) -> bool {
        self.status == "ok" || self.status == "pass"
    }
}

pub fn load(path: &Path) -> Result<SuiteManifest, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError { code: "CONFIG_UNREADABLE", message: format!("{}: {e}", path.display()) })?;
    toml::from_str(&text).map_err(|e| ConfigError { code: "CONFIG_SYNTAX", message: e.to_string() })
}

/// Loads and validates every entry, assigns output directories under `out`
/// and rejects duplicates. Nothing runs before all entries pass.
pub fn plan(m: &SuiteManifest, base: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<(String, Prepared, PathBuf)>, ConfigError> {
    let mut seen = BTreeSet::new();
    let mut plan = Vec::new();
    for c in &m.configs {
        let path = base.join(c);
        let text = std::fs::read_to_string(&path).map_err(|e| ConfigError { code: "CONFIG_UNREADABLE", message: format!("{}: {e}", path.display()) })?;
        let mut cfg = config::parse(&text).map_err(|e| ConfigError { code: e.code, message: format!("{c}: {}", e.message) })?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| c.clone());
        let sub = cfg.out.clone().unwrap_or(stem);
        let dir = crate::resolve_out(out, &sub);
        if !seen.insert(dir.clone()) {
            return Err(ConfigError { code: "DUPLICATE_OUTPUT", message: format!("output directory {} is used twice", dir.display()) });
        }
        let prep = config::prepare(cfg, Some(&text)).map_err(|e| ConfigError { code: e.code, message: format!("{c}: {}", e.message) })?;
        plan.push((c.clone(), prep, dir));
    }
    for id in &m.criteria {
        if *id == 0 || *id > TITLES.len() {
            return Err(ConfigError { code: "PARAMETER_INVALID", message: format!("no criterion {id}") });
        }
    }
    Ok(plan)
}

/// Runs everything and writes `summary.csv` and `summary.json` into `out`.
/// Failures are recorded per row; the suite always completes. Output
/// directories in the summary are relative to `out`.
pub fn execute(m: &SuiteManifest, plan: Vec<(String, Prepared, PathBuf)>, out: &Path, jobs: usize) -> std::io::Result<Vec<SummaryRow>> {
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(std::io::Error::other)?;
    let criteria = CriteriaSuite::new();
    let (mut rows, crit): (Vec<SummaryRow>, Vec<SummaryRow>) = pool.install(|| {
        let rows = plan
            .par_iter()
            .map(|(name, prep, dir)| match crate::run_prepared(prep, dir) {
                Ok(_) => {
                    let shown = dir.strip_prefix(out).unwrap_or(dir).display().to_string();
                    SummaryRow { entry: name.clone(), kind: "config", status: "ok", code: String::new(), detail: shown }
                }
                Err(e) => SummaryRow { entry: name.clone(), kind: "config", status: "error", code: e.code, detail: e.message },
            })
            .collect();
        let crit = m
            .criteria
            .par_iter()
            .map(|id| {
                let o = criteria.evaluate(*id);
                SummaryRow {
                    entry: format!("criterion {id}: {}", o.title),
                    kind: "criterion",
                    status: if o.pass { "pass" } else { "fail" },
                    code: o.error.unwrap_or_default(),
                    detail: o.detail,
                }
            })
            .collect();
        (rows, crit)
    });
    rows.extend(crit);
    let mut t = Table::new("summary", "status per suite entry", &["entry", "kind", "status", "code", "detail"]);
    for r in &rows {
        t.push(vec![r.entry.clone().into(), r.kind.into(), r.status.into(), r.code.clone().into(), r.detail.clone().into()]);
    }
    t.write(out, None)?;
    write_json(&out.join("summary.json"), &json!({ "schema_id": "kglab.suite.v1", "manifest": m, "rows": rows }))?;
    Ok(rows)
}
