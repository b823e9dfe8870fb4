//! File-level commands behind the `fracbeam` binary: single runs, the
//! critical-value table and parameter sweeps, plus readers for every file
//! they write.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracbeam::config::{
    parse_config_text, parse_kv_text, regime_report, validate_config, ConfigError, ParamMap, SimulationConfig,
};
use fracbeam::fem::FemSystem;
use fracbeam::observables::{
    continuous_e0, continuous_i0, detect_blowup, fit_decay_rate, EnergyRecord,
};
use fracbeam::stability::{max_reference_deviation, table1, StabilityError, WellConstants};
use fracbeam::stepper::{run, SimError, Snapshot};
use fracbeam::Verdict;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_BLOWUP: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

pub const WORKERS_ENV: &str = "FRACBEAM_WORKERS";

pub const ENERGY_COLUMNS: [&str; 8] = [
    "t", "kinetic", "elastic", "fractional", "delay", "potential", "total", "sup_norm",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("table: {0}")]
    Stability(#[from] StabilityError),
    #[error("invalid sweep spec: {0}")]
    Sweep(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Csv { .. } => EXIT_IO,
            Self::Sweep(_) => EXIT_USAGE,
            Self::Malformed { .. } | Self::Config(_) | Self::Sim(_) | Self::Stability(_) => {
                EXIT_FAILED
            }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn verdict_exit_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Completed => EXIT_OK,
        Verdict::BlewUpAt(_) => EXIT_BLOWUP,
        Verdict::FailedAt(..) => EXIT_FAILED,
    }
}

/// Round-trip float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), fmt_f64)
}

pub fn load_config(path: &Path) -> Result<SimulationConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(validate_config(&parse_config_text(&text)?)?)
}

/// `key = value` lines in key order.
pub fn write_kv(path: &Path, map: &ParamMap) -> Result<(), CliError> {
    let text: String = map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_kv(path: &Path) -> Result<ParamMap, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_kv_text(&text)?)
}

pub fn write_energy_csv(path: &Path, records: &[EnergyRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(ENERGY_COLUMNS).map_err(csv_err(path))?;
    for r in records {
        w.write_record(
            [r.t, r.kinetic, r.elastic, r.fractional, r.delay, r.potential, r.total, r.sup_norm]
                .map(fmt_f64),
        )
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn parse_row(path: &Path, rec: &csv::StringRecord, width: usize) -> Result<Vec<f64>, CliError> {
    if rec.len() != width {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            message: format!("expected {width} fields, found {}", rec.len()),
        });
    }
    rec.iter()
        .map(|f| {
            f.parse::<f64>().map_err(|e| CliError::Malformed {
                path: path.to_path_buf(),
                message: format!("bad number {f:?}: {e}"),
            })
        })
        .collect()
}

/// Reads `energy.csv`. The delay window sum is not stored and is left at zero.
pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergyRecord>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let v = parse_row(path, &rec.map_err(csv_err(path))?, ENERGY_COLUMNS.len())?;
        out.push(EnergyRecord {
            t: v[0],
            kinetic: v[1],
            elastic: v[2],
            fractional: v[3],
            delay: v[4],
            delay_sum: 0.0,
            potential: v[5],
            total: v[6],
            sup_norm: v[7],
        });
    }
    Ok(out)
}

/// One row per node and snapshot: `t, x, value`.
pub fn write_snapshots_csv(path: &Path, sys: &FemSystem, snaps: &[Snapshot]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["t", "x", "value"]).map_err(csv_err(path))?;
    for s in snaps {
        for (x, v) in sys.nodal_values(&s.q) {
            w.write_record([s.t, x, v].map(fmt_f64)).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_snapshots_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let v = parse_row(path, &rec.map_err(csv_err(path))?, 3)?;
        out.push((v[0], v[1], v[2]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub verdict: Verdict,
    pub e0: f64,
    pub w: Option<f64>,
    pub t_star: Option<f64>,
    pub dt: f64,
    pub steps: usize,
    pub wall_secs: f64,
}

impl RunSummary {
    pub fn to_params(&self) -> ParamMap {
        let mut m = ParamMap::new();
        m.insert("verdict".into(), self.verdict.to_string());
        m.insert("E0".into(), fmt_f64(self.e0));
        m.insert("w".into(), fmt_opt(self.w));
        m.insert("t_star".into(), fmt_opt(self.t_star));
        m.insert("dt".into(), fmt_f64(self.dt));
        m.insert("steps".into(), self.steps.to_string());
        m.insert("wall_s".into(), format!("{:.3}", self.wall_secs));
        m
    }

    pub fn line(&self) -> String {
        format!(
            "verdict={} E0={} w={} t_star={} dt={} steps={} wall_s={:.3}",
            self.verdict.label(),
            self.e0,
            self.w.map_or("none".into(), |w| w.to_string()),
            self.t_star.map_or("none".into(), |t| t.to_string()),
            self.dt,
            self.steps,
            self.wall_secs
        )
    }
}

/// Runs one configuration and writes `config.txt`, `regime.txt`,
/// `energy.csv`, `snapshots.csv` and `summary.txt` into `out_dir`.
pub fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    dt: Option<f64>,
    t_final: Option<f64>,
) -> Result<RunSummary, CliError> {
    let mut cfg = load_config(config_path)?;
    if let Some(dt) = dt {
        cfg = cfg.with_param("dt", dt)?;
    }
    if let Some(t) = t_final {
        cfg = cfg.with_param("T", t)?;
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    fs::write(out_dir.join("config.txt"), cfg.to_config_text())
        .map_err(io_err(&out_dir.join("config.txt")))?;

    let e0 = continuous_e0(&cfg);
    let report = regime_report(&cfg, e0, continuous_i0(&cfg));
    write_kv(&out_dir.join("regime.txt"), &report.to_params())?;

    let start = Instant::now();
    let out = run(&cfg)?;
    let wall_secs = start.elapsed().as_secs_f64();
    let used = cfg.with_dt(out.dt)?;
    let sys = FemSystem::new(cfg.length, cfg.n_nodes).map_err(SimError::from)?;
    write_energy_csv(&out_dir.join("energy.csv"), &out.trace.records)?;
    write_snapshots_csv(&out_dir.join("snapshots.csv"), &sys, &out.snapshots)?;

    let summary = RunSummary {
        e0: out.trace.records.first().map_or(f64::NAN, |r| r.total),
        w: out.trace.decay_rate,
        t_star: detect_blowup(&out.trace, &used),
        verdict: out.trace.verdict.clone(),
        dt: out.dt,
        steps: out.iterations.len(),
        wall_secs,
    };
    write_kv(&out_dir.join("summary.txt"), &summary.to_params())?;
    Ok(summary)
}

/// Writes the critical-value table; returns the largest deviation from the
/// reference values when `compare` is set.
pub fn cmd_table1(out_path: &Path, p_list: &[f64], compare: bool) -> Result<(Vec<WellConstants>, Option<f64>), CliError> {
    let rows = table1(p_list)?;
    let mut w = csv::Writer::from_path(out_path).map_err(csv_err(out_path))?;
    w.write_record(["p", "lambda_c", "d", "lambda_d"])
        .map_err(csv_err(out_path))?;
    for r in &rows {
        w.write_record([r.p, r.lambda_c, r.d, r.lambda_d].map(fmt_f64))
            .map_err(csv_err(out_path))?;
    }
    w.flush().map_err(io_err(out_path))?;
    let dev = if compare { max_reference_deviation(&rows) } else { None };
    Ok((rows, dev))
}

pub fn read_table1_csv(path: &Path) -> Result<Vec<WellConstants>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let v = parse_row(path, &rec.map_err(csv_err(path))?, 4)?;
        out.push(WellConstants {
            p: v[0],
            c_star: fracbeam::stability::c_star(1.0),
            lambda_c: v[1],
            d: v[2],
            lambda_d: v[3],
        });
    }
    Ok(out)
}

/// Parses `3..9` (inclusive integer range) or `3,5,7.5`.
pub fn parse_p_list(text: &str) -> Result<Vec<f64>, String> {
    if let Some((a, b)) = text.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
        let b: i64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
        return Ok((a..=b).map(|p| p as f64).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

/// One swept parameter and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Parses `name=start:step:stop` (inclusive of `stop` up to rounding) or `name=v1,v2,...`.
pub fn parse_sweep_axis(spec: &str) -> Result<SweepAxis, CliError> {
    let bad = |m: &str| CliError::Sweep(format!("{spec:?}: {m}"));
    let (name, range) = spec.split_once('=').ok_or_else(|| bad("expected name=range"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(bad("empty parameter name"));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(&format!("bad number {s:?}")))
    };
    let range = range.trim();
    let values = if range.is_empty() {
        Vec::new()
    } else if range.contains(':') {
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:step:stop"));
        }
        let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step <= 0.0 {
            return Err(bad("step must be positive"));
        }
        if stop < start {
            Vec::new()
        } else {
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
    } else {
        range.split(',').map(num).collect::<Result<_, _>>()?
    };
    Ok(SweepAxis {
        name: name.to_string(),
        values,
    })
}

/// Cartesian grid of one or two axes, the last axis varying fastest.
pub fn sweep_points(axes: &[SweepAxis]) -> Result<Vec<Vec<f64>>, CliError> {
    match axes.len() {
        1 => Ok(axes[0].values.iter().map(|v| vec![*v]).collect()),
        2 => Ok(axes[0]
            .values
            .iter()
            .flat_map(|a| axes[1].values.iter().map(move |b| vec![*a, *b]))
            .collect()),
        n => Err(CliError::Sweep(format!("expected one or two parameters, got {n}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub verdict: Verdict,
    pub e0: f64,
    pub w: Option<f64>,
    pub t_star: Option<f64>,
}

/// Default worker count: the environment variable, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn sweep_one(cfg: &SimulationConfig) -> Result<SweepRow, CliError> {
    let out = run(cfg)?;
    let used = cfg.with_dt(out.dt)?;
    Ok(SweepRow {
        values: Vec::new(),
        e0: out.trace.records.first().map_or(f64::NAN, |r| r.total),
        w: match out.trace.verdict {
            Verdict::Completed => fit_decay_rate(&out.trace.records, 2.0 * cfg.s_delay)
                .ok()
                .map(|f| f.w),
            _ => None,
        },
        t_star: detect_blowup(&out.trace, &used),
        verdict: out.trace.verdict,
    })
}

/// Runs every grid point with at most `workers` simultaneous simulations and
/// writes `map.csv` in grid order.
pub fn cmd_sweep(
    config_path: &Path,
    axes: &[SweepAxis],
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<SweepRow>, CliError> {
    use rayon::prelude::*;

    let base = load_config(config_path)?;
    let points = sweep_points(axes)?;
    let configs = points
        .iter()
        .map(|pt| {
            axes.iter().zip(pt).try_fold(base.clone(), |c, (axis, v)| {
                c.with_param(&axis.name, *v).map_err(|e| match e {
                    ConfigError::UnknownKey(k) => CliError::Sweep(format!("unknown parameter {k:?}")),
                    other => CliError::Config(other),
                })
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Sweep(format!("thread pool: {e}")))?;
    let results: Vec<Result<SweepRow, CliError>> =
        pool.install(|| configs.par_iter().map(sweep_one).collect());
    let mut rows = Vec::with_capacity(results.len());
    for (pt, res) in points.into_iter().zip(results) {
        let mut row = res?;
        row.values = pt;
        rows.push(row);
    }

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("map.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header: Vec<String> = axes.iter().map(|a| a.name.clone()).collect();
    header.extend(["verdict", "E0", "w", "t_star"].map(String::from));
    w.write_record(&header).map_err(csv_err(&path))?;
    for r in &rows {
        let mut rec: Vec<String> = r.values.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(r.verdict.label().to_string());
        rec.push(fmt_f64(r.e0));
        rec.push(fmt_opt(r.w));
        rec.push(fmt_opt(r.t_star));
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(rows)
}
