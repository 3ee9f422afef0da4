//! Scenario runner: parses a TOML scenario, builds the state and foliation,
//! runs the listed experiments and writes a JSON summary plus CSV tables.

pub mod config;
pub mod experiments;
pub mod scenarios;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use config::{experiment_name, ConfigError, ScenarioConfig};
use experiments::{run_experiment, Scenario};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const EXPERIMENT_ERROR: i32 = 1;
    pub const CONFIG_ERROR: i32 = 2;
}

/// Reads a scenario from a file path, or from the bundled catalog by name.
pub fn load(source: &str) -> Result<ScenarioConfig, ConfigError> {
    let path = Path::new(source);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{source}: {e}")))?
    } else if let Some(s) = scenarios::find(source) {
        s.text.to_string()
    } else {
        return Err(ConfigError::Io(format!("{source}: no such file or bundled scenario")));
    };
    config::parse(&text)
}

/// Parses and fully builds a scenario without running anything.
pub fn validate(source: &str) -> Result<Scenario, ConfigError> {
    Scenario::build(load(source)?)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub strict: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub summary: Value,
    pub out_dir: PathBuf,
    pub errored: bool,
    pub all_pass: bool,
}

impl RunReport {
    pub fn exit_code(&self, strict: bool) -> i32 {
        if self.errored || (strict && !self.all_pass) {
            exit::EXPERIMENT_ERROR
        } else {
            exit::OK
        }
    }
}

/// Writes `contents` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn to_pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Runs every experiment of a built scenario and writes its artifacts.
///
/// `summary.json` depends only on the scenario and seed; wall-clock data
/// goes to `run_meta.json`.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> std::io::Result<RunReport> {
    let seed = opts.seed.unwrap_or(sc.config.seed);
    let out_dir = opts
        .out
        .clone()
        .or_else(|| sc.config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.config.name));
    fs::create_dir_all(&out_dir)?;
    let started = unix_seconds();
    let mut entries = Vec::new();
    let mut timings = serde_json::Map::new();
    let (mut errored, mut all_pass) = (false, true);
    for (i, e) in sc.config.experiments.iter().enumerate() {
        let name = experiment_name(i, e);
        let t0 = Instant::now();
        let entry = match run_experiment(sc, i, seed) {
            Ok(outcome) => {
                let pass = outcome.pass();
                all_pass &= pass;
                let mut files = Vec::new();
                for (suffix, csv) in &outcome.tables {
                    let file = format!("{name}.{suffix}.csv");
                    write_atomic(&out_dir.join(&file), csv.as_bytes())?;
                    files.push(file);
                }
                json!({
                    "name": name,
                    "kind": e.kind(),
                    "status": "ok",
                    "pass": pass,
                    "checks": outcome.checks,
                    "metrics": outcome.metrics,
                    "files": files,
                })
            }
            Err(err) => {
                errored = true;
                all_pass = false;
                json!({
                    "name": name,
                    "kind": e.kind(),
                    "status": "error",
                    "error": format!("{}: {err}", name),
                })
            }
        };
        timings.insert(name, json!(t0.elapsed().as_secs_f64()));
        entries.push(entry);
    }
    let summary = json!({
        "scenario": sc.config.name,
        "description": sc.config.description,
        "schema_version": sc.config.version,
        "seed": seed,
        "spacetime_dim": sc.config.spacetime_dim,
        "particles": sc.psi.n_particles(),
        "subsystem": sc.config.particles.subsystem,
        "reference_leaf": sc.config.numerics.leaf,
        "raw_norm2": sc.raw_norm2,
        "normalized": sc.config.wavefunction.normalize,
        "experiments": entries,
        "all_pass": all_pass,
        "errored": errored,
    });
    let meta = json!({
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "experiment_seconds": timings,
        "threads": rayon::current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_atomic(&out_dir.join("summary.json"), &to_pretty(&summary))?;
    write_atomic(&out_dir.join("run_meta.json"), &to_pretty(&meta))?;
    Ok(RunReport { summary, out_dir, errored, all_pass })
}

/// Configures the global thread pool from `HBD_THREADS`, if set.
pub fn init_threads() -> Result<(), String> {
    match std::env::var("HBD_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| format!("HBD_THREADS={v} is not a thread count"))?;
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}
