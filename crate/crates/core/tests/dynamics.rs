use std::sync::Arc;

use fracbeam::config::{parse_config_text, validate_config, SimulationConfig};
use fracbeam::delay::History;
use fracbeam::fem::FemSystem;
use fracbeam::observables::{functionals_ij, EnergyRecord};
use fracbeam::stepper::{initial_profile, run, Simulation};
use fracbeam::Verdict;

fn config(overrides: &[(&str, &str)]) -> SimulationConfig {
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

fn energies(cfg: &SimulationConfig, steps: usize) -> Vec<EnergyRecord> {
    let mut sim = Simulation::new(cfg).unwrap();
    let mut out = vec![sim.energy()];
    for _ in 0..steps {
        sim.step().unwrap();
        out.push(sim.energy());
    }
    out
}

#[test]
fn undamped_linear_beam_conserves_energy() {
    let cfg = config(&[
        ("N_nodes", "60"),
        ("a1", "0"),
        ("a2", "0"),
        ("fractional", "false"),
        ("source", "false"),
    ]);
    let e = energies(&cfg, 10_000);
    let e0 = e[0].total;
    let drift = e.iter().map(|r| ((r.total - e0) / e0).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-10, "drift {drift:e}");
}

#[test]
fn damped_linear_energy_never_increases() {
    let cfg = config(&[("N_nodes", "60"), ("a2", "0"), ("source", "false")]);
    let e = energies(&cfg, 10_000);
    let slack = 1e-12 * e[0].total.max(1.0);
    for w in e.windows(2) {
        assert!(w[1].total - w[0].total <= slack, "t = {}", w[1].t);
    }
    assert!(e.last().unwrap().total < 0.01 * e[0].total);
    assert!(e.iter().any(|r| r.fractional > 0.0));
}

#[test]
fn dissipation_holds_for_other_fractional_orders() {
    for theta in ["0.3", "0.7"] {
        let cfg = config(&[
            ("N_nodes", "40"),
            ("a2", "0"),
            ("source", "false"),
            ("theta", theta),
            ("vartheta", "1"),
        ]);
        let e = energies(&cfg, 2000);
        let slack = 1e-12 * e[0].total.max(1.0);
        assert!(e.windows(2).all(|w| w[1].total - w[0].total <= slack), "theta {theta}");
    }
}

#[test]
fn temporal_order_is_two() {
    let base = [
        ("N_nodes", "6"),
        ("a1", "1"),
        ("a2", "0"),
        ("fractional", "false"),
        ("source", "false"),
        ("T", "0.2"),
        ("s_delay", "0.2"),
    ];
    let at = |dt: f64| {
        let mut o = base.to_vec();
        let dt_s = dt.to_string();
        o.push(("dt", &dt_s));
        let cfg = config(&o);
        let mut sim = Simulation::new(&cfg).unwrap();
        for _ in 0..cfg.n_steps() {
            sim.step().unwrap();
        }
        sim.state().q.clone()
    };
    let dt = 1e-4;
    let q: Vec<Vec<f64>> = (0..5).map(|k| at(dt / f64::from(1 << k))).collect();
    // Richardson extrapolation of the two finest solutions
    let reference: Vec<f64> = q[4]
        .iter()
        .zip(&q[3])
        .map(|(f, c)| f + (f - c) / 3.0)
        .collect();
    let err = |v: &Vec<f64>| {
        v.iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(&q[0]), err(&q[1]), err(&q[2]));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let cfg = config(&[("N_nodes", "50"), ("T", "0.5"), ("s_delay", "0.1")]);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.snapshots, b.snapshots);
}

#[test]
fn halving_dt_does_not_raise_median_iterations() {
    let median = |dt: &str| {
        let cfg = config(&[("T", "1"), ("dt", dt)]);
        let mut it = run(&cfg).unwrap().iterations;
        it.sort_unstable();
        it[it.len() / 2]
    };
    assert!(median("0.0005") <= median("0.001"));
}

#[test]
fn kinetic_plus_j_recovers_energy() {
    let cfg = config(&[("N_nodes", "40"), ("T", "0.5"), ("s_delay", "0.1")]);
    let mut sim = Simulation::new(&cfg).unwrap();
    let v = 1.0;
    for _ in 0..300 {
        sim.step().unwrap();
        let e = sim.energy();
        let (_, j) = functionals_ij(sim.system(), &cfg, sim.state(), sim.field(), sim.buffer(), Some(v)).unwrap();
        let continuous_total = e.total - e.delay + v * cfg.dt * e.delay_sum;
        assert!((e.kinetic + j - continuous_total).abs() <= 1e-9 * continuous_total.abs().max(1e-300));
    }
}

#[test]
fn initial_i_is_positive_in_decay_regime() {
    let cfg = config(&[("N_nodes", "100")]);
    let sim = Simulation::new(&cfg).unwrap();
    let (i, j) = functionals_ij(sim.system(), &cfg, sim.state(), sim.field(), sim.buffer(), None).unwrap();
    assert!(i > 0.0);
    assert!((i - (0.8 - 2.577e-7)).abs() < 1e-3);
    assert!((j - sim.energy().total).abs() < 1e-15);
}

#[test]
fn zero_state_gives_zero_functionals() {
    let cfg = config(&[("N_nodes", "20"), ("lambda", "0")]);
    let sim = Simulation::new(&cfg).unwrap();
    let (i, j) = functionals_ij(sim.system(), &cfg, sim.state(), sim.field(), sim.buffer(), Some(0.5)).unwrap();
    assert_eq!((i, j), (0.0, 0.0));
    let e = sim.energy();
    assert_eq!(
        [e.kinetic, e.elastic, e.fractional, e.delay, e.potential, e.total],
        [0.0; 6]
    );
}

#[test]
fn discrete_initial_energy_examples() {
    let e1 = energies(&config(&[]), 0)[0].total;
    assert!((e1 - 0.400127).abs() / 0.400127 < 5e-3);
    let e2 = energies(&config(&[("lambda", "200"), ("dt", "0.00001"), ("T", "0.1")]), 0)[0].total;
    assert!((e2 - -496.4864).abs() / 496.4864 < 1e-2);
}

#[test]
fn nonzero_history_feeds_the_delayed_term() {
    let cfg = config(&[("N_nodes", "30"), ("T", "0.1"), ("s_delay", "0.05"), ("lambda", "0"), ("a2", "2")]);
    let sys = Arc::new(FemSystem::new(1.0, 30).unwrap());
    let g = |x: f64| (x * (1.0 - x)).powi(2);
    let history = History::profile(move |x, _| g(x));
    let zero = vec![0.0; sys.n_free];
    let mut sim = Simulation::with_initial_data(&cfg, sys.clone(), zero.clone(), zero, history).unwrap();
    // the delayed velocity pushes the beam away from rest immediately
    assert!(sim.state().qdd.iter().any(|v| *v != 0.0));
    for _ in 0..10 {
        sim.step().unwrap();
    }
    assert!(sim.state().q.iter().step_by(2).all(|v| *v <= 0.0));
    assert!(sim.buffer().running_sum() > 0.0);
}

#[test]
fn linear_run_completes_with_profile_data() {
    let cfg = config(&[("N_nodes", "40"), ("T", "1"), ("s_delay", "0.2")]);
    let out = run(&cfg).unwrap();
    assert_eq!(out.trace.verdict, Verdict::Completed);
    let sys = FemSystem::new(1.0, 40).unwrap();
    assert_eq!(out.snapshots[0].q, initial_profile(&sys, &cfg).into_inner());
}
