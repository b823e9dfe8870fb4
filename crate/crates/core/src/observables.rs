//! Energy bookkeeping, the functionals `I` and `J`, decay fits and blow-up detection.

use std::fmt;

use thiserror::Error;

use crate::config::{admissible_v_interval, SimulationConfig};
use crate::delay::DelayBuffer;
use crate::fem::FemSystem;
use crate::fractional::DiffusiveField;
use crate::quadrature::integrate_adaptive;
use crate::stepper::State;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("energy {value} at t = {t} is not positive; cannot fit a log-linear decay")]
    NonPositiveEnergy { t: f64, value: f64 },
    #[error("fewer than two records at or after t = {0}")]
    TooFewPoints(f64),
    #[error("admissible weight interval is empty; supply v explicitly")]
    EmptyWeightInterval,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Completed,
    BlewUpAt(f64),
    FailedAt(f64, String),
}

impl Verdict {
    pub fn blowup_time(&self) -> Option<f64> {
        match self {
            Self::BlewUpAt(t) => Some(*t),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Completed => "Completed",
            Self::BlewUpAt(_) => "BlewUpAt",
            Self::FailedAt(..) => "FailedAt",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Completed => f.write_str("Completed"),
            Self::BlewUpAt(t) => write!(f, "BlewUpAt({t})"),
            Self::FailedAt(t, why) => write!(f, "FailedAt({t}: {why})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRecord {
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub fractional: f64,
    pub delay: f64,
    /// Mass-norm window sum behind `delay`.
    pub delay_sum: f64,
    pub potential: f64,
    pub total: f64,
    pub sup_norm: f64,
}

impl EnergyRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn compose(
        t: f64,
        kinetic: f64,
        elastic: f64,
        fractional: f64,
        a2: f64,
        delay_sum: f64,
        potential: f64,
        sup_norm: f64,
    ) -> Self {
        let delay = 0.5 * a2 * delay_sum;
        Self {
            t,
            kinetic,
            elastic,
            fractional,
            delay,
            delay_sum,
            potential,
            total: kinetic + elastic + fractional + delay - potential,
            sup_norm,
        }
    }

    /// `(I, J)` from the stored components, with weight `v` on the delay window.
    pub fn functionals(&self, p: f64, v: f64, dt: f64) -> (f64, f64) {
        let window = v * dt * self.delay_sum;
        let i = 2.0 * self.elastic + 2.0 * self.fractional - p * self.potential + window;
        let j = self.elastic - self.potential + self.fractional + window;
        (i, j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub records: Vec<EnergyRecord>,
    pub verdict: Verdict,
    pub decay_rate: Option<f64>,
}

impl EnergyTrace {
    pub fn first(&self) -> Option<&EnergyRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EnergyRecord> {
        self.records.last()
    }

    /// The record closest to `t`.
    pub fn at(&self, t: f64) -> Option<&EnergyRecord> {
        let idx = self.records.partition_point(|r| r.t < t);
        let after = self.records.get(idx);
        let before = idx.checked_sub(1).and_then(|i| self.records.get(i));
        match (before, after) {
            (Some(b), Some(a)) => Some(if (t - b.t).abs() <= (a.t - t).abs() { b } else { a }),
            (b, a) => b.or(a),
        }
    }
}

/// `b Δξ Σ_ℓ ‖G_ℓ‖²_M`, the half-line form of `(b/2) ∫_ℝ ‖G‖² dα`.
pub fn fractional_energy(sys: &FemSystem, field: &DiffusiveField, b: f64, dxi: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    b * dxi * field.rows().map(|g| sys.mass.quad_form(g)).sum::<f64>()
}

/// Discrete energy of a state, every term evaluated from scratch.
pub fn discrete_energy(
    sys: &FemSystem,
    cfg: &SimulationConfig,
    state: &State,
    field: &DiffusiveField,
    buf: &DelayBuffer,
) -> EnergyRecord {
    let dxi = cfg.r_xi / cfg.m_xi as f64;
    let potential = if cfg.source {
        sys.lp_integral(&state.q, cfg.p) / cfg.p
    } else {
        0.0
    };
    EnergyRecord::compose(
        state.t,
        0.5 * sys.mass.quad_form(&state.qd),
        0.5 * sys.stiffness_norm_sq(&state.q),
        fractional_energy(sys, field, cfg.effective_b(), dxi),
        cfg.a2,
        buf.running_sum(),
        potential,
        sys.sup_norm(&state.q),
    )
}

fn profile_integrals(cfg: &SimulationConfig) -> (f64, f64) {
    let l = cfg.length;
    let lam = cfg.lambda;
    let curv = |x: f64| {
        let u = x / l;
        lam * (2.0 - 12.0 * u + 12.0 * u * u) / (l * l)
    };
    let val = |x: f64| {
        let u = x / l;
        lam * u * u * (1.0 - u) * (1.0 - u)
    };
    let bending = integrate_adaptive(|x| curv(x).powi(2), 0.0, l, 1e-14 * (1.0 + lam * lam));
    let lp = if cfg.source {
        let scale = lam.abs().powf(cfg.p).max(1e-300);
        integrate_adaptive(|x| val(x).abs().powf(cfg.p), 0.0, l, 1e-14 * scale)
    } else {
        0.0
    };
    (bending, lp)
}

/// `E(0) = ½‖V₀″‖² − (1/p)‖V₀‖ₚᵖ` for the configured profile, by adaptive quadrature.
pub fn continuous_e0(cfg: &SimulationConfig) -> f64 {
    let (bending, lp) = profile_integrals(cfg);
    0.5 * bending - lp / cfg.p
}

/// `I(0) = ‖V₀″‖² − ‖V₀‖ₚᵖ` for the configured profile.
pub fn continuous_i0(cfg: &SimulationConfig) -> f64 {
    let (bending, lp) = profile_integrals(cfg);
    bending - lp
}

/// `(I, J)` at a state. Without an explicit `v` the midpoint of the admissible
/// interval is used.
pub fn functionals_ij(
    sys: &FemSystem,
    cfg: &SimulationConfig,
    state: &State,
    field: &DiffusiveField,
    buf: &DelayBuffer,
    v_weight: Option<f64>,
) -> Result<(f64, f64), ObservableError> {
    let v = match v_weight {
        Some(v) => v,
        None => {
            let (lo, hi) = admissible_v_interval(cfg).ok_or(ObservableError::EmptyWeightInterval)?;
            0.5 * (lo + hi)
        }
    };
    Ok(discrete_energy(sys, cfg, state, field, buf).functionals(cfg.p, v, cfg.dt))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub w: f64,
    pub k: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln E = ln K − w t` over records with `t ≥ t_start`.
pub fn fit_decay_rate(records: &[EnergyRecord], t_start: f64) -> Result<DecayFit, ObservableError> {
    let window: Vec<&EnergyRecord> = records.iter().filter(|r| r.t >= t_start).collect();
    if window.len() < 2 {
        return Err(ObservableError::TooFewPoints(t_start));
    }
    if let Some(r) = window.iter().find(|r| !(r.total > 0.0)) {
        return Err(ObservableError::NonPositiveEnergy {
            t: r.t,
            value: r.total,
        });
    }
    let n = window.len() as f64;
    let mt = window.iter().map(|r| r.t).sum::<f64>() / n;
    let my = window.iter().map(|r| r.total.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for r in &window {
        let dt = r.t - mt;
        let dy = r.total.ln() - my;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(DecayFit {
        w: -slope,
        k: intercept.exp(),
        r_squared,
    })
}

/// First time the sup-norm escapes the threshold or the solver gave up, whichever is earlier.
pub fn detect_blowup(trace: &EnergyTrace, cfg: &SimulationConfig) -> Option<f64> {
    let escaped = trace
        .records
        .iter()
        .find(|r| !(r.sup_norm <= cfg.blowup_threshold))
        .map(|r| r.t);
    match (escaped, trace.verdict.blowup_time()) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}
