use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kglab_cli::config::{self, ConfigError};
use kglab_cli::output::ErrorRecord;
use kglab_cli::{out_root, resolve_out, run_prepared, suite, EXIT_FAILED, EXIT_INVALID};

/// Numerical lab for Klein-Gordon equations with moving potentials.
#[derive(Parser)]
#[command(name = "kglab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; relative paths sit under $KGLAB_OUT_ROOT.
        #[arg(long)]
        out: Option<String>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a suite manifest and write summary.csv.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Configs run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a scenario config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn fail(e: &ConfigError, stage: &'static str, code: i32) -> ExitCode {
    let rec = ErrorRecord { code: e.code.into(), message: e.message.clone(), stage };
    eprintln!("{}", rec.to_json());
    ExitCode::from(code as u8)
}

fn read(path: &PathBuf) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError { code: "CONFIG_UNREADABLE", message: format!("{}: {e}", path.display()) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config: path } => {
            let res = read(&path).and_then(|t| config::parse(&t).and_then(|c| config::prepare(c, Some(&t))));
            match res {
                Ok(p) => {
                    for w in &p.warnings {
                        eprintln!("warning: {w}");
                    }
                    println!("ok: {} ({})", path.display(), p.config.experiment.name());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, "validate", EXIT_INVALID),
            }
        }
        Command::Run { config: path, out, seed } => {
            let text = match read(&path) {
                Ok(t) => t,
                Err(e) => return fail(&e, "validate", EXIT_INVALID),
            };
            let mut cfg = match config::parse(&text) {
                Ok(c) => c,
                Err(e) => return fail(&e, "validate", EXIT_INVALID),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let sub = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| format!("kglab-out/{}", cfg.experiment.name()));
            let dir = resolve_out(&out_root(), &sub);
            let prep = match config::prepare(cfg, Some(&text)) {
                Ok(p) => p,
                Err(e) => {
                    let rec = ErrorRecord { code: e.code.into(), message: e.message.clone(), stage: "validate" };
                    if std::fs::create_dir_all(&dir).is_ok() {
                        let _ = std::fs::write(dir.join("error.json"), rec.to_json() + "\n");
                    }
                    return fail(&e, "validate", EXIT_INVALID);
                }
            };
            for w in &prep.warnings {
                eprintln!("warning: {w}");
            }
            match run_prepared(&prep, &dir) {
                Ok(r) => {
                    for o in &r.outputs {
                        println!("wrote {}", o.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(rec) => {
                    eprintln!("{}", rec.to_json());
                    ExitCode::from(EXIT_FAILED as u8)
                }
            }
        }
        Command::Suite { config: path, out, seed, jobs } => {
            let m = match suite::load(&path) {
                Ok(m) => m,
                Err(e) => return fail(&e, "validate", EXIT_INVALID),
            };
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            let dir = resolve_out(&out_root(), &out.unwrap_or_else(|| "kglab-suite".into()));
            let plan = match suite::plan(&m, &base, &dir, seed) {
                Ok(p) => p,
                Err(e) => return fail(&e, "validate", EXIT_INVALID),
            };
            match suite::execute(&m, plan, &dir, jobs.max(1)) {
                Ok(rows) => {
                    for r in &rows {
                        println!("{:<9} {:<6} {} {}", r.kind, r.status, r.entry, r.detail);
                    }
                    println!("summary: {}", dir.join("summary.csv").display());
                    if rows.iter().all(|r| r.ok()) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_FAILED as u8)
                    }
                }
                Err(e) => fail(&ConfigError { code: "IO_ERROR", message: e.to_string() }, "output", EXIT_FAILED),
            }
        }
    }
}
