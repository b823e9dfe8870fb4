//! Newmark time stepping of the coupled beam, mode and delay system.

use std::sync::Arc;

use thiserror::Error;

use crate::banded::{BandCholesky, BandError};
use crate::config::{ConfigError, SimulationConfig};
use crate::delay::{DelayBuffer, DelayError, History};
use crate::fem::{FemError, FemSystem, NodalField};
use crate::fractional::{build_grid, c_augm_coeff, AuxScheme, DiffusiveField, XiGrid};
use crate::observables::{fit_decay_rate, EnergyRecord, EnergyTrace, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("fixed-point iteration did not converge in {iterations} iterations (last update {last_update:.3e}, growing: {growing})")]
    NonConvergence {
        iterations: usize,
        last_update: f64,
        growing: bool,
    },
    #[error("non-finite value in the solution")]
    NonFinite,
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Band(#[from] BandError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("effective operator could not be factorized: {0}")]
    Band(#[from] BandError),
    #[error("initial acceleration: {0}")]
    Start(#[from] StepError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
    pub n: usize,
    pub t: f64,
}

impl State {
    pub fn zeros(n_free: usize) -> Self {
        Self {
            q: vec![0.0; n_free],
            qd: vec![0.0; n_free],
            qdd: vec![0.0; n_free],
            n: 0,
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).chain(&self.qdd).all(|v| v.is_finite())
    }
}

/// Factorized `M + γΔt(a₁ + c_augm) M + βΔt² K`, reused for every step of a run.
#[derive(Debug, Clone)]
pub struct EffectiveOperator {
    pub factor: BandCholesky,
    pub c_augm: f64,
}

impl EffectiveOperator {
    pub fn new(sys: &FemSystem, cfg: &SimulationConfig, grid: &XiGrid) -> Result<Self, BandError> {
        let c_augm = c_augm_coeff(grid, cfg.vartheta, cfg.dt, cfg.effective_b());
        let dt = cfg.dt;
        let alpha = 1.0 + cfg.newmark_gamma * dt * (cfg.a1 + c_augm);
        let a = sys
            .mass
            .combine(alpha, &sys.stiffness, cfg.newmark_beta * dt * dt);
        Ok(Self {
            factor: a.cholesky()?,
            c_augm,
        })
    }
}

/// `Q̈⁰` from the equation of motion at `t = 0`.
pub fn initial_acceleration(
    sys: &FemSystem,
    cfg: &SimulationConfig,
    q0: &[f64],
    qd0: &[f64],
    grid: &XiGrid,
    field: &DiffusiveField,
    buf: &DelayBuffer,
) -> Result<Vec<f64>, StepError> {
    let n = sys.n_free;
    let mut rhs = vec![0.0; n];
    if cfg.source {
        sys.nonlinear_force_into(q0, cfg.p, &mut rhs)
            .map_err(|_| StepError::NonFinite)?;
    }
    let kq = sys.stiffness_apply(q0);
    let frac = crate::fractional::fractional_force(grid, field, cfg.effective_b());
    let delayed = if cfg.a2 != 0.0 {
        buf.velocity_at(sys, -(buf.delay_steps() as i64))?
    } else {
        NodalField::zeros(n)
    };
    let damp: Vec<f64> = (0..n)
        .map(|i| cfg.a1 * qd0[i] + frac[i] + cfg.a2 * delayed[i])
        .collect();
    let md = sys.mass.mul_vec(&damp);
    for i in 0..n {
        rhs[i] -= kq[i] + md[i];
    }
    Ok(sys.mass.cholesky()?.solve(&rhs)?)
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub q: Vec<f64>,
}

/// A run in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimulationConfig,
    sys: Arc<FemSystem>,
    grid: XiGrid,
    aux: AuxScheme,
    op: EffectiveOperator,
    b: f64,
    state: State,
    field: DiffusiveField,
    buf: DelayBuffer,
    // ‖G_ℓ‖²_M, advanced alongside the modes
    mode_norms: Vec<f64>,
    kinetic2: f64,
}

impl Simulation {
    /// Run from the profile `λ(x/L)²(1 − x/L)²` at rest with zero history.
    pub fn new(cfg: &SimulationConfig) -> Result<Self, SimError> {
        let sys = Arc::new(FemSystem::new(cfg.length, cfg.n_nodes)?);
        let q0 = initial_profile(&sys, cfg);
        let qd0 = vec![0.0; sys.n_free];
        Self::with_initial_data(cfg, sys, q0.into_inner(), qd0, History::Zero)
    }

    pub fn with_initial_data(
        cfg: &SimulationConfig,
        sys: Arc<FemSystem>,
        q0: Vec<f64>,
        qd0: Vec<f64>,
        history: History,
    ) -> Result<Self, SimError> {
        let grid = build_grid(cfg.theta, cfg.r_xi, cfg.m_xi);
        let aux = AuxScheme::new(&grid, cfg.vartheta, cfg.dt);
        let op = EffectiveOperator::new(&sys, cfg, &grid)?;
        let field = DiffusiveField::zeros(cfg.m_xi, sys.n_free);
        let mut buf = DelayBuffer::init(&sys, cfg.delay_steps, cfg.dt, history, &qd0);
        let qdd0 = initial_acceleration(&sys, cfg, &q0, &qd0, &grid, &field, &buf)?;
        buf.seed_initial_acceleration(&qdd0);
        let kinetic2 = sys.mass.quad_form(&qd0);
        Ok(Self {
            b: cfg.effective_b(),
            cfg: cfg.clone(),
            grid,
            aux,
            op,
            state: State {
                q: q0,
                qd: qd0,
                qdd: qdd0,
                n: 0,
                t: 0.0,
            },
            mode_norms: vec![0.0; cfg.m_xi],
            field,
            buf,
            sys,
            kinetic2,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn system(&self) -> &FemSystem {
        &self.sys
    }

    pub fn grid(&self) -> &XiGrid {
        &self.grid
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn field(&self) -> &DiffusiveField {
        &self.field
    }

    pub fn buffer(&self) -> &DelayBuffer {
        &self.buf
    }

    pub fn operator(&self) -> &EffectiveOperator {
        &self.op
    }

    /// Energy of the current state, using the incrementally maintained mode norms.
    pub fn energy(&self) -> EnergyRecord {
        let sys = &self.sys;
        let s = &self.state;
        let potential = if self.cfg.source {
            sys.lp_integral(&s.q, self.cfg.p) / self.cfg.p
        } else {
            0.0
        };
        let fractional = if self.b == 0.0 {
            0.0
        } else {
            self.b * self.grid.dxi * self.mode_norms.iter().sum::<f64>()
        };
        EnergyRecord::compose(
            s.t,
            0.5 * self.kinetic2,
            0.5 * sys.stiffness_norm_sq(&s.q),
            fractional,
            self.cfg.a2,
            self.buf.running_sum(),
            potential,
            sys.sup_norm(&s.q),
        )
    }

    /// Advances one step. On error the simulation is left unchanged.
    pub fn step(&mut self) -> Result<StepInfo, StepError> {
        let cfg = &self.cfg;
        let sys = &*self.sys;
        let n = sys.n_free;
        let (dt, beta, gamma) = (cfg.dt, cfg.newmark_beta, cfg.newmark_gamma);
        let s = &self.state;

        // Everything on the right-hand side that multiplies M.
        let mut base = if self.b != 0.0 {
            self.aux.history_force(&self.field, self.b)
        } else {
            vec![0.0; n]
        };
        let ca = self.op.c_augm;
        for i in 0..n {
            let lag = (1.0 - gamma) * dt * s.qdd[i];
            base[i] += cfg.a1 * (s.qd[i] + lag) + ca * (2.0 * s.qd[i] + lag);
        }
        if cfg.a2 != 0.0 {
            let delayed = self.buf.get_delayed(sys, s.n)?;
            for i in 0..n {
                base[i] += cfg.a2 * delayed[i];
            }
        }
        let qpred: Vec<f64> = (0..n)
            .map(|i| s.q[i] + dt * s.qd[i] + (0.5 - beta) * dt * dt * s.qdd[i])
            .collect();
        let mut rhs_lin = sys.mass.mul_vec(&base);
        let kp = sys.stiffness_apply(&qpred);
        for i in 0..n {
            rhs_lin[i] = -rhs_lin[i] - kp[i];
        }

        let bdt2 = beta * dt * dt;
        let mut acc = s.qdd.clone();
        let mut q_new = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut iterations = 0;
        let mut first_update = f64::NAN;
        loop {
            iterations += 1;
            for i in 0..n {
                q_new[i] = qpred[i] + bdt2 * acc[i];
            }
            if cfg.source {
                sys.nonlinear_force_into(&q_new, cfg.p, &mut rhs)
                    .map_err(|_| StepError::NonFinite)?;
                for i in 0..n {
                    rhs[i] += rhs_lin[i];
                }
            } else {
                rhs.copy_from_slice(&rhs_lin);
            }
            self.op.factor.solve_in_place(&mut rhs)?;
            if rhs.iter().any(|v| !v.is_finite()) {
                return Err(StepError::NonFinite);
            }
            let (mut update, mut scale) = (0.0f64, 0.0f64);
            for i in 0..n {
                update = update.max((rhs[i] - acc[i]).abs());
                scale = scale.max(rhs[i].abs());
            }
            std::mem::swap(&mut acc, &mut rhs);
            if !cfg.source || update <= cfg.nl_tol * scale {
                break;
            }
            if iterations == 1 {
                first_update = update;
            }
            if iterations >= cfg.nl_max_iter {
                return Err(StepError::NonConvergence {
                    iterations,
                    last_update: update,
                    growing: update > first_update,
                });
            }
        }
        for i in 0..n {
            q_new[i] = qpred[i] + bdt2 * acc[i];
        }
        let qd_new: Vec<f64> = (0..n)
            .map(|i| s.qd[i] + dt * ((1.0 - gamma) * s.qdd[i] + gamma * acc[i]))
            .collect();
        if q_new.iter().chain(&qd_new).any(|v| !v.is_finite()) {
            return Err(StepError::NonFinite);
        }
        let kinetic2 = sys.mass.quad_form(&qd_new);
        self.buf.push(&qd_new, &acc, kinetic2)?;

        if self.b != 0.0 {
            let v_half: Vec<f64> = (0..n).map(|i| 0.5 * (s.qd[i] + qd_new[i])).collect();
            let mv = sys.mass.mul_vec(&v_half);
            let vv: f64 = v_half.iter().zip(&mv).map(|(a, b)| a * b).sum();
            for l in 0..self.field.m_xi() {
                let (c, g) = (self.aux.decay[l], self.aux.gain[l]);
                let row = self.field.row_mut(l);
                let mut gm = 0.0;
                for (gi, (vi, mvi)) in row.iter_mut().zip(v_half.iter().zip(&mv)) {
                    gm += *gi * mvi;
                    *gi = c * *gi + g * vi;
                }
                self.mode_norms[l] = c * c * self.mode_norms[l] + 2.0 * c * g * gm + g * g * vv;
            }
        }

        let next_n = s.n + 1;
        self.state = State {
            q: q_new,
            qd: qd_new,
            qdd: acc,
            n: next_n,
            t: next_n as f64 * dt,
        };
        self.kinetic2 = kinetic2;
        Ok(StepInfo { iterations })
    }
}

/// Hermite interpolant of `λ(x/L)²(1 − x/L)²`.
pub fn initial_profile(sys: &FemSystem, cfg: &SimulationConfig) -> NodalField {
    let (l, lam) = (cfg.length, cfg.lambda);
    sys.interpolate(
        |x| {
            let u = x / l;
            lam * u * u * (1.0 - u) * (1.0 - u)
        },
        |x| {
            let u = x / l;
            lam * 2.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / l
        },
    )
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: EnergyTrace,
    pub snapshots: Vec<Snapshot>,
    pub iterations: Vec<usize>,
    /// Time step actually used (halved when the run was retried).
    pub dt: f64,
    pub retried: bool,
}

struct Attempt {
    records: Vec<EnergyRecord>,
    snapshots: Vec<Snapshot>,
    iterations: Vec<usize>,
    failure: Option<(f64, StepError)>,
}

fn attempt(cfg: &SimulationConfig) -> Result<Attempt, SimError> {
    let mut sim = Simulation::new(cfg)?;
    let steps = cfg.n_steps();
    let stride = cfg.snapshot_stride.max(1);
    let mut records = Vec::with_capacity(steps + 1);
    let mut snapshots = vec![Snapshot {
        t: 0.0,
        q: sim.state().q.clone(),
    }];
    let mut iterations = Vec::with_capacity(steps);
    records.push(sim.energy());
    let mut failure = None;
    for _ in 0..steps {
        let t_next = (sim.state().n + 1) as f64 * cfg.dt;
        match sim.step() {
            Ok(info) => iterations.push(info.iterations),
            Err(e) => {
                failure = Some((t_next, e));
                break;
            }
        }
        let rec = sim.energy();
        records.push(rec);
        let escaped = !(rec.sup_norm <= cfg.blowup_threshold);
        if sim.state().n % stride == 0 || escaped {
            snapshots.push(Snapshot {
                t: sim.state().t,
                q: sim.state().q.clone(),
            });
        }
        if escaped {
            break;
        }
    }
    if snapshots.last().map(|s| s.t) != Some(sim.state().t) {
        snapshots.push(Snapshot {
            t: sim.state().t,
            q: sim.state().q.clone(),
        });
    }
    Ok(Attempt {
        records,
        snapshots,
        iterations,
        failure,
    })
}

/// Runs a configuration to `T` or until blow-up.
///
/// A fixed-point failure reruns the whole simulation once at `Δt/2` when
/// `retry_on_nonconvergence` is set.
pub fn run(cfg: &SimulationConfig) -> Result<RunOutput, SimError> {
    let mut used = cfg.clone();
    let mut out = attempt(&used)?;
    let mut retried = false;
    if cfg.retry_on_nonconvergence {
        if let Some((t, StepError::NonConvergence { .. })) = &out.failure {
            log::info!("fixed point failed at t = {t}; retrying with dt = {}", cfg.dt / 2.0);
            used = cfg.with_dt(cfg.dt / 2.0)?;
            out = attempt(&used)?;
            retried = true;
        }
    }
    let escaped = out
        .records
        .iter()
        .find(|r| !(r.sup_norm <= cfg.blowup_threshold))
        .map(|r| r.t);
    let verdict = match (&out.failure, escaped) {
        (_, Some(t)) => Verdict::BlewUpAt(t),
        (None, None) => Verdict::Completed,
        (Some((t, e)), None) => match e {
            StepError::NonFinite => Verdict::BlewUpAt(*t),
            StepError::NonConvergence { growing: true, .. } => Verdict::BlewUpAt(*t),
            other => Verdict::FailedAt(*t, other.to_string()),
        },
    };
    let decay_rate = match verdict {
        Verdict::Completed => fit_decay_rate(&out.records, 2.0 * cfg.s_delay)
            .ok()
            .map(|f| f.w),
        _ => None,
    };
    Ok(RunOutput {
        trace: EnergyTrace {
            records: out.records,
            verdict,
            decay_rate,
        },
        snapshots: out.snapshots,
        iterations: out.iterations,
        dt: used.dt,
        retried,
    })
}
