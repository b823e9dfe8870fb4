//! Delayed-velocity storage.
//!
//! The buffer tracks levels `newest - m ..= newest`. Levels below zero come from
//! the history function and are materialized on demand; only computed levels
//! (`>= 0`) keep their velocity and acceleration vectors. The mass-norms of all
//! `m + 1` levels are kept so the delay contribution to the energy,
//! `Σ_{j=n-m}^{n-1} ‖Q̇ʲ‖²_M`, is available as a running sum.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::fem::{FemSystem, NodalField};

const RECOMPUTE_EVERY: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("level {level} is not held by the delay buffer (newest level {newest})")]
    NotAvailable { level: i64, newest: i64 },
    #[error("vector length {actual} does not match {expected} free DOFs")]
    Dimension { expected: usize, actual: usize },
}

type Profile = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Past velocity `f₀(x, τ)` for `τ ∈ (-s, 0)`.
#[derive(Clone, Default)]
pub enum History {
    #[default]
    Zero,
    /// `f(x, τ)` with an optional analytic `∂ₓf(x, τ)`; without it the slope is
    /// taken by centered differences.
    Profile { f: Profile, df: Option<Profile> },
}

impl fmt::Debug for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("History::Zero"),
            Self::Profile { df, .. } => write!(f, "History::Profile {{ analytic_slope: {} }}", df.is_some()),
        }
    }
}

impl History {
    pub fn profile(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Profile {
            f: Arc::new(f),
            df: None,
        }
    }

    pub fn profile_with_slope(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Profile {
            f: Arc::new(f),
            df: Some(Arc::new(df)),
        }
    }

    /// Hermite interpolant of `f₀(·, τ)`.
    pub fn interpolate(&self, sys: &FemSystem, tau: f64) -> NodalField {
        match self {
            Self::Zero => NodalField::zeros(sys.n_free),
            Self::Profile { f, df } => {
                let eps = 1e-6 * sys.mesh.length;
                match df {
                    Some(df) => sys.interpolate(|x| f(x, tau), |x| df(x, tau)),
                    None => sys.interpolate(
                        |x| f(x, tau),
                        |x| (f(x + eps, tau) - f(x - eps, tau)) / (2.0 * eps),
                    ),
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Level {
    vel: Vec<f64>,
    acc: Vec<f64>,
}

/// Ring of past levels for the delayed feedback term.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    m: usize,
    dt: f64,
    n_free: usize,
    history: History,
    newest: i64,
    levels: VecDeque<Level>,
    norms: VecDeque<f64>,
    running_sum: f64,
    pushes: usize,
}

impl DelayBuffer {
    /// Buffer at step 0: history levels `-m..-1`, level 0 seeded by the initial velocity.
    ///
    /// The level-0 acceleration starts at zero; set it with
    /// [`DelayBuffer::seed_initial_acceleration`] once it is known.
    pub fn init(sys: &FemSystem, m: usize, dt: f64, history: History, v0: &[f64]) -> Self {
        assert!(m >= 1, "delay must span at least one step");
        assert_eq!(v0.len(), sys.n_free);
        let mut norms = VecDeque::with_capacity(m + 1);
        for j in -(m as i64)..0 {
            let nu = match &history {
                History::Zero => 0.0,
                h => sys.mass_norm_sq(&h.interpolate(sys, j as f64 * dt)),
            };
            norms.push_back(nu);
        }
        norms.push_back(sys.mass_norm_sq(v0));
        let mut levels = VecDeque::with_capacity(m + 1);
        levels.push_back(Level {
            vel: v0.to_vec(),
            acc: vec![0.0; sys.n_free],
        });
        let mut buf = Self {
            m,
            dt,
            n_free: sys.n_free,
            history,
            newest: 0,
            levels,
            norms,
            running_sum: 0.0,
            pushes: 0,
        };
        buf.running_sum = buf.recomputed_sum();
        buf
    }

    pub fn seed_initial_acceleration(&mut self, a0: &[f64]) {
        assert_eq!(self.newest, 0, "initial acceleration can only be set at step 0");
        self.levels[0].acc.copy_from_slice(a0);
    }

    pub fn delay_steps(&self) -> usize {
        self.m
    }

    /// Number of levels spanned by the ring (`m + 1`).
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn newest_level(&self) -> i64 {
        self.newest
    }

    /// `Σ ‖Q̇ʲ‖²_M` over levels `newest - m ..= newest - 1`.
    pub fn running_sum(&self) -> f64 {
        self.running_sum
    }

    /// The same sum, recomputed from the stored norms.
    pub fn recomputed_sum(&self) -> f64 {
        self.norms.iter().take(self.m).sum()
    }

    /// Velocity stored for level `level`, or the history interpolant for negative levels.
    pub fn velocity_at(&self, sys: &FemSystem, level: i64) -> Result<NodalField, DelayError> {
        if level < 0 {
            if level < self.newest - self.m as i64 {
                return Err(DelayError::NotAvailable {
                    level,
                    newest: self.newest,
                });
            }
            return Ok(self.history.interpolate(sys, level as f64 * self.dt));
        }
        self.stored(level).map(|l| NodalField(l.vel.clone()))
    }

    fn stored(&self, level: i64) -> Result<&Level, DelayError> {
        let front = self.newest + 1 - self.levels.len() as i64;
        if level < front || level > self.newest {
            return Err(DelayError::NotAvailable {
                level,
                newest: self.newest,
            });
        }
        Ok(&self.levels[(level - front) as usize])
    }

    /// Delayed velocity `Q̇^{n+1-m}` needed while advancing from step `n`.
    pub fn get_delayed(&self, sys: &FemSystem, n: usize) -> Result<NodalField, DelayError> {
        let k = n as i64 + 1 - self.m as i64;
        if k <= 0 {
            return self.velocity_at(sys, k);
        }
        let prev = self.stored(k - 1)?;
        let cur = self.stored(k)?;
        let half = 0.5 * self.dt;
        Ok(NodalField(
            prev.vel
                .iter()
                .zip(prev.acc.iter().zip(&cur.acc))
                .map(|(v, (a0, a1))| v + half * (a0 + a1))
                .collect(),
        ))
    }

    /// Appends the next level, evicting the oldest one.
    pub fn push(&mut self, vel: &[f64], acc: &[f64], m_norm: f64) -> Result<(), DelayError> {
        for v in [vel, acc] {
            if v.len() != self.n_free {
                return Err(DelayError::Dimension {
                    expected: self.n_free,
                    actual: v.len(),
                });
            }
        }
        let evicted = self.norms.pop_front().unwrap_or(0.0);
        let previous_newest = *self.norms.back().unwrap_or(&0.0);
        self.norms.push_back(m_norm);
        self.running_sum += previous_newest - evicted;
        self.newest += 1;

        let slot = if self.levels.len() == self.m + 1 {
            let mut old = self.levels.pop_front().expect("non-empty");
            old.vel.copy_from_slice(vel);
            old.acc.copy_from_slice(acc);
            old
        } else {
            Level {
                vel: vel.to_vec(),
                acc: acc.to_vec(),
            }
        };
        self.levels.push_back(slot);

        self.pushes += 1;
        if self.pushes.is_multiple_of(RECOMPUTE_EVERY) {
            self.running_sum = self.recomputed_sum();
        }
        Ok(())
    }
}
