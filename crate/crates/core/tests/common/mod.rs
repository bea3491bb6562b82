#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::PathBuf;

use gridswitch_core::case::{parse_case, GridCase};
use gridswitch_core::powerflow::TopologyStatus;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load_case(name: &str) -> GridCase {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    parse_case(&text).expect("fixture parses")
}

pub fn case14() -> GridCase {
    load_case("case14.m")
}

pub fn case118() -> GridCase {
    load_case("case118.m")
}

/// `(bus id, |V|, angle in degrees)` from an offline reference solver.
pub fn reference_voltages(name: &str) -> Vec<(i64, f64, f64)> {
    let mut rdr = csv::Reader::from_path(fixture_path(name)).expect("reference csv");
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (
                r[0].parse().unwrap(),
                r[1].parse().unwrap(),
                r[2].parse().unwrap(),
            )
        })
        .collect()
}

/// Breadth-first search from the slack bus over in-service lines; returns
/// whether every loaded or generating bus is reached.
pub fn bfs_connected(case: &GridCase, status: &TopologyStatus) -> bool {
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for (k, br) in case.branches.iter().enumerate() {
        if status.as_slice()[k] {
            let f = case.bus_index[&br.from_bus];
            let t = case.bus_index[&br.to_bus];
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let Some(slack) = case
        .buses
        .iter()
        .position(|b| b.kind == gridswitch_core::case::BusKind::Slack)
    else {
        return false;
    };
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([slack]);
    seen[slack] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let mut needed: Vec<bool> = case
        .buses
        .iter()
        .map(|b| b.p_load != 0.0 || b.q_load != 0.0)
        .collect();
    for g in &case.generators {
        if g.status {
            needed[case.bus_index[&g.bus]] = true;
        }
    }
    needed.iter().zip(&seen).all(|(need, s)| !need || *s)
}

/// Random status vector with each line open with probability `p_open`.
pub fn random_status<R: rand::Rng>(rng: &mut R, n: usize, p_open: f64) -> TopologyStatus {
    TopologyStatus::new((0..n).map(|_| !rng.random_bool(p_open)).collect())
}

/// Σ generation − Σ load − Σ shunt conductance draw − Σ line losses, MW.
pub fn power_balance_residual(
    case: &GridCase,
    sol: &gridswitch_core::powerflow::PowerFlowSolution,
    p_load: &[f64],
) -> f64 {
    let gen: f64 = sol.p_gen.iter().sum();
    let load: f64 = p_load.iter().sum();
    let shunt: f64 = case
        .buses
        .iter()
        .zip(&sol.v_mag)
        .map(|(b, v)| b.g_shunt * v * v)
        .sum();
    gen - load - shunt - sol.total_loss
}

pub fn case2() -> GridCase {
    load_case("case2.m")
}

/// Largest relative deviation between `analytic` and a central difference
/// of `loss` with step `h`, over every parameter. Relative error uses
/// `max(|a|, |n|, 1e−4)` as denominator so vanishing gradients are
/// compared absolutely.
pub fn max_gradient_error<P: gridswitch_core::nn::Params>(
    params: &P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
    h: f64,
) -> f64 {
    let mut worst = 0.0_f64;
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    for (ti, g) in grads.iter().enumerate() {
        for (i, a) in g.iter().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= h;
            let n = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    worst
}
