//! Run parameters, the flat `key = value` configuration format, and the
//! a-priori regime classification.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::fractional::analytic_a0;
use crate::stability;

/// Raw parameters keyed by their configuration-file names.
pub type ParamMap = BTreeMap<String, String>;

const DELAY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("`{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Which scaling of the diffusive output coefficient `b` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BConvention {
    /// `b = sin(θπ)/π`.
    #[default]
    Unit,
    /// `b = a₁·sin(θπ)/π`.
    ScaledByA1,
}

impl FromStr for BConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" => Ok(Self::Unit),
            "scaled_by_a1" => Ok(Self::ScaledByA1),
            other => Err(format!("unknown b_convention `{other}`")),
        }
    }
}

impl fmt::Display for BConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Unit => "unit",
            Self::ScaledByA1 => "scaled_by_a1",
        })
    }
}

/// Validated parameters of one simulation run. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub length: f64,
    pub t_final: f64,
    pub n_nodes: usize,
    pub dt: f64,
    pub theta: f64,
    pub vartheta: f64,
    pub a1: f64,
    pub a2: f64,
    pub s_delay: f64,
    pub p: f64,
    pub lambda: f64,
    pub r_xi: f64,
    pub m_xi: usize,
    pub newmark_beta: f64,
    pub newmark_gamma: f64,
    pub nl_tol: f64,
    pub nl_max_iter: usize,
    pub blowup_threshold: f64,
    pub b_convention: BConvention,
    /// Include the tempered fractional damping.
    pub fractional: bool,
    /// Include the power-type source term.
    pub source: bool,
    pub snapshot_stride: usize,
    pub retry_on_nonconvergence: bool,
    /// Delay in steps, `s / dt`.
    pub delay_steps: usize,
}

const KEYS: &[&str] = &[
    "L",
    "T",
    "N_nodes",
    "dt",
    "theta",
    "vartheta",
    "a1",
    "a2",
    "s_delay",
    "p",
    "lambda",
    "R_xi",
    "M_xi",
    "newmark_beta",
    "newmark_gamma",
    "nl_tol",
    "nl_max_iter",
    "blowup_threshold",
    "b_convention",
    "fractional",
    "source",
    "snapshot_stride",
    "retry_on_nonconvergence",
];

const REQUIRED: &[&str] = &[
    "L", "T", "N_nodes", "dt", "theta", "vartheta", "a1", "a2", "s_delay", "p", "lambda",
];

/// Parses the flat `key = value` text format. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<ParamMap, ConfigError> {
    parse_lines(text, Some(KEYS))
}

/// Same line format as a config, without restricting the key set.
pub fn parse_kv_text(text: &str) -> Result<ParamMap, ConfigError> {
    parse_lines(text, None)
}

fn parse_lines(text: &str, known: Option<&[&str]>) -> Result<ParamMap, ConfigError> {
    let mut map = ParamMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "empty key or value".into(),
            });
        }
        if known.is_some_and(|keys| !keys.contains(&k)) {
            return Err(ConfigError::Parse {
                line,
                message: format!("unknown key `{k}`"),
            });
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(map)
}

fn get<T: FromStr>(raw: &ParamMap, key: &str) -> Result<Option<T>, ConfigError> {
    match raw.get(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value: v.clone(),
        }),
    }
}

fn req<T: FromStr>(raw: &ParamMap, key: &str) -> Result<T, ConfigError> {
    get(raw, key)?.ok_or_else(|| ConfigError::MissingKey(key.to_string()))
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Validates raw parameters and fills defaults.
pub fn validate_config(raw: &ParamMap) -> Result<SimulationConfig, ConfigError> {
    if let Some(k) = raw.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    for k in REQUIRED {
        if !raw.contains_key(*k) {
            return Err(ConfigError::MissingKey((*k).to_string()));
        }
    }
    let b_convention = match raw.get("b_convention") {
        None => BConvention::default(),
        Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
            key: "b_convention".into(),
            value: v.clone(),
        })?,
    };
    let mut cfg = SimulationConfig {
        length: req(raw, "L")?,
        t_final: req(raw, "T")?,
        n_nodes: req(raw, "N_nodes")?,
        dt: req(raw, "dt")?,
        theta: req(raw, "theta")?,
        vartheta: req(raw, "vartheta")?,
        a1: req(raw, "a1")?,
        a2: req(raw, "a2")?,
        s_delay: req(raw, "s_delay")?,
        p: req(raw, "p")?,
        lambda: req(raw, "lambda")?,
        r_xi: get(raw, "R_xi")?.unwrap_or(200.0),
        m_xi: get(raw, "M_xi")?.unwrap_or(400),
        newmark_beta: get(raw, "newmark_beta")?.unwrap_or(0.25),
        newmark_gamma: get(raw, "newmark_gamma")?.unwrap_or(0.5),
        nl_tol: get(raw, "nl_tol")?.unwrap_or(1e-10),
        nl_max_iter: get(raw, "nl_max_iter")?.unwrap_or(50),
        blowup_threshold: get(raw, "blowup_threshold")?.unwrap_or(1e8),
        b_convention,
        fractional: get(raw, "fractional")?.unwrap_or(true),
        source: get(raw, "source")?.unwrap_or(true),
        snapshot_stride: get(raw, "snapshot_stride")?.unwrap_or(100),
        retry_on_nonconvergence: get(raw, "retry_on_nonconvergence")?.unwrap_or(true),
        delay_steps: 0,
    };
    cfg.delay_steps = check_invariants(&cfg)?;
    Ok(cfg)
}

fn check_invariants(cfg: &SimulationConfig) -> Result<usize, ConfigError> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("{name} must be positive, got {v}")))
        }
    };
    positive("L", cfg.length)?;
    positive("T", cfg.t_final)?;
    positive("dt", cfg.dt)?;
    if !(cfg.theta > 0.0 && cfg.theta < 1.0) {
        return Err(invalid(format!(
            "fractional order out of range: theta = {} not in (0, 1)",
            cfg.theta
        )));
    }
    positive("vartheta", cfg.vartheta)?;
    if !(cfg.a1 >= 0.0) || !(cfg.a2 >= 0.0) {
        return Err(invalid("damping coefficients a1, a2 must be non-negative"));
    }
    positive("s_delay", cfg.s_delay)?;
    if !(cfg.p > 2.0) || !cfg.p.is_finite() {
        return Err(invalid(format!("source exponent p = {} must exceed 2", cfg.p)));
    }
    if !(cfg.lambda >= 0.0) || !cfg.lambda.is_finite() {
        return Err(invalid("lambda must be non-negative"));
    }
    positive("R_xi", cfg.r_xi)?;
    if cfg.m_xi < 1 {
        return Err(invalid("M_xi must be at least 1"));
    }
    if cfg.n_nodes < 3 {
        return Err(invalid(format!("N_nodes = {} must be at least 3", cfg.n_nodes)));
    }
    if !(0.0..=0.5).contains(&cfg.newmark_beta) {
        return Err(invalid("newmark_beta must lie in [0, 1/2]"));
    }
    if !(0.0..=1.0).contains(&cfg.newmark_gamma) {
        return Err(invalid("newmark_gamma must lie in [0, 1]"));
    }
    positive("nl_tol", cfg.nl_tol)?;
    if cfg.nl_max_iter < 1 {
        return Err(invalid("nl_max_iter must be at least 1"));
    }
    positive("blowup_threshold", cfg.blowup_threshold)?;
    if cfg.snapshot_stride < 1 {
        return Err(invalid("snapshot_stride must be at least 1"));
    }
    let ratio = cfg.s_delay / cfg.dt;
    let m = ratio.round();
    if (ratio - m).abs() > DELAY_TOL * ratio.max(1.0) || m < 1.0 {
        return Err(invalid(format!(
            "delay not a multiple of dt: s/dt = {ratio}"
        )));
    }
    Ok(m as usize)
}

impl SimulationConfig {
    /// Diffusive output coefficient per the selected convention.
    pub fn b(&self) -> f64 {
        let base = (self.theta * std::f64::consts::PI).sin() / std::f64::consts::PI;
        match self.b_convention {
            BConvention::Unit => base,
            BConvention::ScaledByA1 => base * self.a1,
        }
    }

    /// `b` as used by the dynamics: zero when the fractional term is switched off.
    pub fn effective_b(&self) -> f64 {
        if self.fractional {
            self.b()
        } else {
            0.0
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt * (1.0 + 1e-12)).floor() as usize
    }

    /// Same configuration with a different time step (delay steps recomputed).
    pub fn with_dt(&self, dt: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.dt = dt;
        c.delay_steps = check_invariants(&c)?;
        Ok(c)
    }

    pub fn to_params(&self) -> ParamMap {
        let mut m = ParamMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("L", self.length.to_string());
        put("T", self.t_final.to_string());
        put("N_nodes", self.n_nodes.to_string());
        put("dt", self.dt.to_string());
        put("theta", self.theta.to_string());
        put("vartheta", self.vartheta.to_string());
        put("a1", self.a1.to_string());
        put("a2", self.a2.to_string());
        put("s_delay", self.s_delay.to_string());
        put("p", self.p.to_string());
        put("lambda", self.lambda.to_string());
        put("R_xi", self.r_xi.to_string());
        put("M_xi", self.m_xi.to_string());
        put("newmark_beta", self.newmark_beta.to_string());
        put("newmark_gamma", self.newmark_gamma.to_string());
        put("nl_tol", self.nl_tol.to_string());
        put("nl_max_iter", self.nl_max_iter.to_string());
        put("blowup_threshold", self.blowup_threshold.to_string());
        put("b_convention", self.b_convention.to_string());
        put("fractional", self.fractional.to_string());
        put("source", self.source.to_string());
        put("snapshot_stride", self.snapshot_stride.to_string());
        put(
            "retry_on_nonconvergence",
            self.retry_on_nonconvergence.to_string(),
        );
        m
    }

    /// Renders the configuration in the `key = value` file format.
    pub fn to_config_text(&self) -> String {
        self.to_params()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parameter map with one key overridden; used by sweeps and CLI overrides.
    pub fn with_param(&self, key: &str, value: f64) -> Result<Self, ConfigError> {
        let mut raw = self.to_params();
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        let v = match key {
            "N_nodes" | "M_xi" | "nl_max_iter" | "snapshot_stride" => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.to_string(),
                    });
                }
                (value as usize).to_string()
            }
            "b_convention" | "fractional" | "source" | "retry_on_nonconvergence" => {
                return Err(ConfigError::BadValue {
                    key: key.into(),
                    value: value.to_string(),
                })
            }
            _ => value.to_string(),
        };
        raw.insert(key.to_string(), v);
        validate_config(&raw)
    }
}

/// `a₁ > a₂ + 2bA₀`.
pub fn check_a1_condition(cfg: &SimulationConfig) -> bool {
    cfg.a1 > cfg.a2 + 2.0 * cfg.b() * analytic_a0(cfg.theta, cfg.vartheta)
}

/// Open interval of admissible energy weights `v`, or `None` when empty.
pub fn admissible_v_interval(cfg: &SimulationConfig) -> Option<(f64, f64)> {
    let ba0 = cfg.b() * analytic_a0(cfg.theta, cfg.vartheta);
    let lo = 0.5 * cfg.a2 + ba0;
    let hi = cfg.a1 - ba0 - 0.5 * cfg.a2;
    (lo < hi).then_some((lo, hi))
}

/// `ϑ^{1−θ} < a₂`.
pub fn check_a2_condition(cfg: &SimulationConfig) -> bool {
    cfg.vartheta.powf(1.0 - cfg.theta) < cfg.a2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    ExponentialDecay,
    BlowUp,
    Indeterminate,
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ExponentialDecay => "ExponentialDecay",
            Self::BlowUp => "BlowUp",
            Self::Indeterminate => "Indeterminate",
        })
    }
}

/// What the sufficient conditions say about a configuration before running it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub a1_condition_holds: bool,
    pub a2_condition_holds: bool,
    pub v_interval: Option<(f64, f64)>,
    pub e0: f64,
    pub d_depth: f64,
    pub existence_condition_holds: bool,
    pub predicted: Prediction,
}

/// Classifies the regime from the initial energy `e0` and `I(0)`.
pub fn regime_report(cfg: &SimulationConfig, e0: f64, i0: f64) -> RegimeReport {
    let a1_condition_holds = check_a1_condition(cfg);
    let a2_condition_holds = check_a2_condition(cfg);
    let existence_condition_holds = stability::check_existence_condition(cfg.p, cfg.length, e0, i0);
    let predicted = if a1_condition_holds && e0 > 0.0 && existence_condition_holds {
        Prediction::ExponentialDecay
    } else if e0 < 0.0 && a2_condition_holds {
        Prediction::BlowUp
    } else {
        Prediction::Indeterminate
    };
    RegimeReport {
        a1_condition_holds,
        a2_condition_holds,
        v_interval: admissible_v_interval(cfg),
        e0,
        d_depth: stability::well_depth(cfg.p, cfg.length),
        existence_condition_holds,
        predicted,
    }
}

impl RegimeReport {
    pub fn to_params(&self) -> ParamMap {
        let mut m = ParamMap::new();
        m.insert("a1_condition_holds".into(), self.a1_condition_holds.to_string());
        m.insert("a2_condition_holds".into(), self.a2_condition_holds.to_string());
        let (lo, hi) = match self.v_interval {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => ("none".into(), "none".into()),
        };
        m.insert("v_lo".into(), lo);
        m.insert("v_hi".into(), hi);
        m.insert("E0".into(), self.e0.to_string());
        m.insert("d_depth".into(), self.d_depth.to_string());
        m.insert("existence_condition_holds".into(), self.existence_condition_holds.to_string());
        m.insert("predicted".into(), self.predicted.to_string());
        m
    }
}
