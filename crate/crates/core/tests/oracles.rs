use std::sync::Arc;

use fracbeam::config::{parse_config_text, validate_config, SimulationConfig};
use fracbeam::delay::{DelayBuffer, History};
use fracbeam::fem::FemSystem;
use fracbeam::fractional::{build_grid, fractional_force, AuxScheme, DiffusiveField};
use fracbeam::quadrature::integrate_adaptive;
use fracbeam::stepper::{initial_acceleration, initial_profile, Simulation};
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{gamma, gamma_lr};

fn example1(overrides: &[(&str, &str)]) -> SimulationConfig {
    let mut raw = parse_config_text(
        "L = 1\nT = 100\nN_nodes = 250\ndt = 0.001\ntheta = 0.5\nvartheta = 0.3\n\
         a1 = 5.0\na2 = 0.4\ns_delay = 5\np = 5\nlambda = 1\n",
    )
    .unwrap();
    for (k, v) in overrides {
        raw.insert(k.to_string(), v.to_string());
    }
    validate_config(&raw).unwrap()
}

/// Root of cosh(k)cos(k) = 1 near 4.73 by Newton on the characteristic function.
fn clamped_root() -> f64 {
    let mut k: f64 = 4.7;
    for _ in 0..50 {
        let f = k.cosh() * k.cos() - 1.0;
        let df = k.sinh() * k.cos() - k.cosh() * k.sin();
        k -= f / df;
    }
    k
}

#[test]
fn fundamental_frequency_matches_characteristic_root() {
    let k1 = clamped_root();
    assert!((k1 - 4.730_040_7).abs() < 1e-7);
    let sys = FemSystem::new(1.0, 250).unwrap();
    let (mu, _) = sys.lowest_eigenpair().unwrap();
    let omega = mu.sqrt();
    assert!(((omega - k1 * k1) / (k1 * k1)).abs() < 1e-3, "omega = {omega}");
}

#[test]
fn nonlinear_force_matches_adaptive_quadrature() {
    let sys = FemSystem::new(1.0, 40).unwrap();
    let f = |x: f64| 3.0 * (x * (1.0 - x)).powi(2) * (1.0 + (7.0 * x).sin());
    let df = |x: f64| {
        let g = (x * (1.0 - x)).powi(2);
        let dg = 2.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
        3.0 * (dg * (1.0 + (7.0 * x).sin()) + g * 7.0 * (7.0 * x).cos())
    };
    let q = sys.interpolate(f, df);
    for p in [3.0, 5.0, 4.5] {
        let load = sys.nonlinear_force(&q, p).unwrap();
        let h = sys.mesh.h;
        for dof in 0..sys.n_free {
            let node = dof / 2 + 1;
            let x0 = (node - 1) as f64 * h;
            let oracle = integrate_adaptive(
                |x| {
                    let v = sys.evaluate(&q, x);
                    let mut unit = vec![0.0; sys.n_free];
                    unit[dof] = 1.0;
                    v * v.abs().powf(p - 2.0) * sys.evaluate(&unit, x)
                },
                x0,
                x0 + 2.0 * h,
                1e-15,
            );
            assert!((load[dof] - oracle).abs() < 1e-10, "p = {p}, dof {dof}");
        }
    }
}

#[test]
fn initial_acceleration_matches_dense_solve() {
    let cfg = example1(&[("N_nodes", "10")]);
    let sys = FemSystem::new(1.0, 10).unwrap();
    let q0 = initial_profile(&sys, &cfg);
    let qd0 = vec![0.0; sys.n_free];
    let grid = build_grid(cfg.theta, cfg.r_xi, cfg.m_xi);
    let field = DiffusiveField::zeros(cfg.m_xi, sys.n_free);
    let buf = DelayBuffer::init(&sys, cfg.delay_steps, cfg.dt, History::Zero, &qd0);
    let got = initial_acceleration(&sys, &cfg, &q0, &qd0, &grid, &field, &buf).unwrap();

    let n = sys.n_free;
    let m = DMatrix::from_fn(n, n, |i, j| sys.mass.get(i, j));
    let k = DMatrix::from_fn(n, n, |i, j| sys.stiffness.get(i, j));
    let f = DVector::from_vec(sys.nonlinear_force(&q0, cfg.p).unwrap().into_inner());
    let q = DVector::from_vec(q0.into_inner());
    let oracle = m.lu().solve(&(f - k * q)).unwrap();
    let sup_got = got.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!((sup_got - oracle.amax()).abs() < 1e-10 * oracle.amax().max(1.0));
    for i in 0..n {
        assert!((got[i] - oracle[i]).abs() < 1e-9 * oracle.amax());
    }
}

#[test]
fn linear_initial_acceleration_is_stiffness_only() {
    let cfg = example1(&[("N_nodes", "12"), ("source", "false")]);
    let sim = Simulation::new(&cfg).unwrap();
    let sys = sim.system();
    let kq = sys.stiffness.mul_vec(&sim.state().q);
    let m = sys.mass.mul_vec(&sim.state().qdd);
    for i in 0..sys.n_free {
        assert!((m[i] + kq[i]).abs() < 1e-9 * kq.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
}

#[test]
fn equilibrium_has_zero_acceleration() {
    let cfg = example1(&[("N_nodes", "12"), ("lambda", "0")]);
    let sim = Simulation::new(&cfg).unwrap();
    assert!(sim.state().qdd.iter().all(|v| *v == 0.0));
}

fn lower_regularized(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(a, x)
    }
}

/// Tempered integral of order `1 − θ` of a unit input, in closed form.
fn tempered_closed_form(theta: f64, vartheta: f64, t: f64) -> f64 {
    lower_regularized(1.0 - theta, vartheta * t) / vartheta.powf(1.0 - theta)
}

/// L1 convolution: piecewise-linear `V` against exact kernel integrals.
fn l1_oracle(theta: f64, vartheta: f64, dt: f64, v: impl Fn(f64) -> f64, n: usize) -> f64 {
    let t = n as f64 * dt;
    // ∫_a^b (t−s)^{−θ} e^{−ϑ(t−s)} ds / Γ(1−θ) with u = t − s
    let kernel = |u0: f64, u1: f64| {
        let a = 1.0 - theta;
        vartheta.powf(theta - 1.0)
            * (lower_regularized(a, vartheta * u1) - lower_regularized(a, vartheta * u0))
    };
    let mut acc = 0.0;
    for j in 0..n {
        let (s0, s1) = (j as f64 * dt, (j + 1) as f64 * dt);
        let slope = (v(s1) - v(s0)) / dt;
        acc += slope * kernel(t - s1, t - s0);
    }
    acc
}

#[test]
fn l1_oracle_is_exact_for_linear_input() {
    for t in [0.1, 0.5, 1.0] {
        let n = (t / 1e-3_f64).round() as usize;
        let l1 = l1_oracle(0.5, 0.3, 1e-3, |s| s, n);
        assert!((l1 - tempered_closed_form(0.5, 0.3, t)).abs() < 1e-12);
    }
    // untempered limit: t^{1−θ} / Γ(2−θ)
    let small = tempered_closed_form(0.5, 1e-12, 1.0);
    assert!((small - 1.0 / gamma(1.5)).abs() < 1e-5);
}

fn diffusive_output_at_one(theta: f64, vartheta: f64, m_xi: usize) -> f64 {
    let dt = 1e-3;
    let grid = build_grid(theta, 200.0, m_xi);
    let aux = AuxScheme::new(&grid, vartheta, dt);
    let b = (theta * std::f64::consts::PI).sin() / std::f64::consts::PI;
    let mut field = DiffusiveField::zeros(grid.len(), 1);
    for _ in 0..1000 {
        aux.update_in_place(&mut field, &[1.0]);
    }
    fractional_force(&grid, &field, b)[0]
}

#[test]
fn diffusive_output_tracks_l1_convolution() {
    let (theta, vartheta, dt) = (0.5, 0.3, 1e-3);
    let grid = build_grid(theta, 200.0, 4000);
    let aux = AuxScheme::new(&grid, vartheta, dt);
    let b = (theta * std::f64::consts::PI).sin() / std::f64::consts::PI;
    let mut field = DiffusiveField::zeros(grid.len(), 1);
    for n in 1..=1000 {
        aux.update_in_place(&mut field, &[1.0]);
        if n >= 100 {
            let out = fractional_force(&grid, &field, b)[0];
            let l1 = l1_oracle(theta, vartheta, dt, |s| s, n);
            assert!(((out - l1) / l1).abs() < 0.02, "n = {n}: {out} vs {l1}");
        }
    }
}

#[test]
fn diffusive_output_error_shrinks_with_finer_grid() {
    let exact = tempered_closed_form(0.5, 0.3, 1.0);
    let coarse = ((diffusive_output_at_one(0.5, 0.3, 4000) - exact) / exact).abs();
    let fine = ((diffusive_output_at_one(0.5, 0.3, 40000) - exact) / exact).abs();
    assert!(coarse < 0.02);
    assert!(fine < 0.01);
    assert!(fine < 0.5 * coarse);
}

#[test]
fn shared_system_gives_identical_runs() {
    let cfg = example1(&[("N_nodes", "30"), ("T", "0.2"), ("s_delay", "0.05")]);
    let sys = Arc::new(FemSystem::new(1.0, 30).unwrap());
    let q0 = initial_profile(&sys, &cfg).into_inner();
    let mut a = Simulation::with_initial_data(&cfg, sys.clone(), q0.clone(), vec![0.0; sys.n_free], History::Zero).unwrap();
    let mut b = Simulation::new(&cfg).unwrap();
    for _ in 0..100 {
        a.step().unwrap();
        b.step().unwrap();
    }
    assert_eq!(a.state(), b.state());
    assert_eq!(a.energy(), b.energy());
}
