mod common;

use gridswitch_core::env::{compute_reward, EnvConfig, EnvError, GridEnv};
use gridswitch_core::powerflow::{solve_newton_raphson, SolverOptions, TopologyStatus};
use proptest::prelude::*;

use common::*;

fn only_term(w: [f64; 5]) -> EnvConfig {
    EnvConfig {
        w1: w[0],
        w2: w[1],
        w3: w[2],
        w4: w[3],
        w5: Some(w[4]),
        ..EnvConfig::default()
    }
}

#[test]
fn ieee118_dimensions() {
    let mut env = GridEnv::new(case118(), EnvConfig::default()).unwrap();
    assert_eq!(env.action_space_size(), 187);
    assert_eq!(env.observation_len(), 849);
    let obs = env.reset().unwrap();
    assert_eq!(obs.values.len(), 849);
    assert_eq!(obs.values[848], 0.0);
    assert!(obs
        .slice(obs.layout.line_status())
        .iter()
        .all(|s| *s == 1.0));
}

#[test]
fn seeded_noise_is_reproducible() {
    let config = EnvConfig {
        load_noise: 0.05,
        seed: 77,
        ..EnvConfig::default()
    };
    let run = || {
        let mut env = GridEnv::new(case14(), config.clone()).unwrap();
        let mut trace = Vec::new();
        for _ in 0..3 {
            trace.extend(env.reset().unwrap().values);
            for a in [3, 0, 5] {
                let step = env.step(a).unwrap();
                trace.push(step.reward);
                trace.extend(step.observation.values);
            }
        }
        trace.into_iter().map(f64::to_bits).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
    let mut other = GridEnv::new(case14(), EnvConfig { seed: 78, ..config }).unwrap();
    let a = other.reset().unwrap();
    let mut env = GridEnv::new(
        case14(),
        EnvConfig {
            seed: 77,
            load_noise: 0.05,
            ..EnvConfig::default()
        },
    )
    .unwrap();
    assert_ne!(a.values, env.reset().unwrap().values);
}

#[test]
fn opening_a_bridge_line_is_penalized() {
    let case = case118();
    let base = TopologyStatus::all_in(186);
    let bridge = (0..186)
        .find(|&k| {
            let mut s = base.clone();
            s.set(k, false);
            !bfs_connected(&case, &s)
        })
        .expect("the 118-bus system has radial lines");
    let mut env = GridEnv::new(case, EnvConfig::default()).unwrap();
    env.reset().unwrap();
    let step = env.step(bridge + 1).unwrap();
    assert_eq!(step.reward, -1000.0);
    assert!(step.done && step.breakdown.penalty_applied && step.info.islanded);
    let obs = &step.observation;
    assert!(obs.slice(obs.layout.v_mag()).iter().all(|v| *v == 0.0));
    assert_eq!(obs.slice(obs.layout.line_status())[bridge], 0.0);
    assert!(matches!(env.step(0), Err(EnvError::EpisodeFinished)));
}

#[test]
fn one_low_voltage_bus_costs_two() {
    let case = case118();
    let status = TopologyStatus::all_in(186);
    let mut sol = solve_newton_raphson(&case, &status, SolverOptions::default()).unwrap();
    sol.v_mag.iter_mut().for_each(|v| *v = 1.0);
    sol.v_mag[40] = 0.93;
    let r = compute_reward(
        &case,
        &sol,
        &status,
        0.0,
        &only_term([0.0, 100.0, 0.0, 0.0, 0.0]),
    );
    assert!((r.voltage_term - 2.0).abs() < 1e-12);
    assert!((r.total + 2.0).abs() < 1e-12);
}

#[test]
fn two_open_lines_cost_twenty_over_186() {
    let case = case118();
    let mut status = TopologyStatus::all_in(186);
    status.set(10, false);
    status.set(100, false);
    let sol = solve_newton_raphson(&case, &status, SolverOptions::default()).unwrap();
    let config = EnvConfig {
        w1: 0.0,
        w2: 0.0,
        w3: 0.0,
        w4: 0.0,
        ..EnvConfig::default()
    };
    let r = compute_reward(&case, &sol, &status, 0.0, &config);
    assert!((r.open_lines_term - 20.0 / 186.0).abs() < 1e-12);
    assert!((r.total + 20.0 / 186.0).abs() < 1e-12);
}

#[test]
fn full_reward_matches_independent_sum() {
    let case = case118();
    let mut status = TopologyStatus::all_in(186);
    status.set(30, false);
    let sol = solve_newton_raphson(&case, &status, SolverOptions::default()).unwrap();
    assert!(sol.converged);
    let baseline = 1.0e5;
    let config = EnvConfig::default();
    let r = compute_reward(&case, &sol, &status, baseline, &config);

    let mut cost = 0.0;
    for (g, p) in case.generators.iter().zip(&sol.p_gen) {
        let n = g.cost.coefficients.len();
        for (i, c) in g.cost.coefficients.iter().enumerate() {
            cost += c * p.powi((n - 1 - i) as i32);
        }
    }
    let mut volt = 0.0;
    for v in &sol.v_mag {
        if *v < 0.95 {
            volt += 0.95 - v;
        } else if *v > 1.05 {
            volt += v - 1.05;
        }
    }
    let mut over = 0.0;
    for (k, br) in case.branches.iter().enumerate() {
        if k == 30 {
            continue;
        }
        let s = sol.s_from[k].norm().max(sol.s_to[k].norm());
        if s > br.rate_a {
            over += s / br.rate_a - 1.0;
        }
    }
    let loss: f64 = sol.p_loss_per_line.iter().sum();
    let expected = -(0.1 * (cost - baseline) + 100.0 * volt + over + 0.1 * loss + 10.0 / 186.0);
    assert!(
        (r.total - expected).abs() < 1e-6 * expected.abs().max(1.0),
        "{} vs {expected}",
        r.total
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_weights_leave_only_penalties(actions in proptest::collection::vec(0usize..21, 10)) {
        let config = EnvConfig { w1: 0.0, w2: 0.0, w3: 0.0, w4: 0.0, w5: Some(0.0), ..EnvConfig::default() };
        let mut env = GridEnv::new(case14(), config).unwrap();
        env.reset().unwrap();
        for a in actions {
            let step = env.step(a).unwrap();
            if step.breakdown.penalty_applied {
                prop_assert_eq!(step.reward, -1000.0);
            } else {
                prop_assert_eq!(step.reward, 0.0);
            }
            if step.done {
                break;
            }
        }
    }
}
