//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use gridswitch_core::agent::ddsac::{DdsacAgent, DdsacConfig};
use gridswitch_core::agent::{Algorithm, Transition};
use gridswitch_core::env::{compute_reward, EnvConfig};
use gridswitch_core::harness::{random_policy_mean, run_multi_seed, run_training, RunConfig};
use gridswitch_core::nn::{Dense, DuelingNet, Mlp, Params, PolicyNet};
use gridswitch_core::powerflow::{
    check_connectivity, solve_newton_raphson, SolverOptions, TopologyStatus,
};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn power_flow_reference() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for (file, reference) in [
        ("case14.m", "case14_reference.csv"),
        ("case118.m", "case118_reference.csv"),
    ] {
        let case = load_case(file);
        let start = Instant::now();
        let sol = solve_newton_raphson(
            &case,
            &TopologyStatus::from_case(&case),
            SolverOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let worst = reference_voltages(reference)
            .into_iter()
            .map(|(id, vm, _)| (sol.v_mag[case.bus_index[&id]] - vm).abs())
            .fold(0.0_f64, f64::max);
        ok &= sol.converged
            && sol.max_mismatch < 1e-8
            && sol.iterations <= 10
            && worst < 1e-3
            && secs < 1.0;
        lines.push(format!(
            "{file}: {} iterations, mismatch {:.1e}, max |V| error {worst:.1e} pu, {secs:.3} s",
            sol.iterations, sol.max_mismatch
        ));
    }
    check(ok, lines.join("; "))
}

fn conservation_fuzz() -> Verdict {
    let case = case118();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let (mut tested, mut converged, mut worst) = (0, 0, 0.0_f64);
    while tested < 500 {
        let p_open = rng.random_range(0.0..0.06);
        let status = random_status(&mut rng, 186, p_open);
        if !bfs_connected(&case, &status) {
            continue;
        }
        tested += 1;
        let sol = solve_newton_raphson(&case, &status, SolverOptions::default())
            .map_err(|e| e.to_string())?;
        if !sol.converged {
            continue;
        }
        converged += 1;
        let p_load: Vec<f64> = case.buses.iter().map(|b| b.p_load).collect();
        worst = worst.max(power_balance_residual(&case, &sol, &p_load).abs() / case.base_mva);
    }
    check(
        worst < 1e-6 && converged > 0,
        format!(
            "{converged}/{tested} connected topologies converged, worst imbalance {worst:.2e} pu"
        ),
    )
}

fn islanding_oracle() -> Verdict {
    let case = case118();
    let mut rng = ChaCha8Rng::seed_from_u64(31_337);
    let (mut agree, mut islanded) = (0, 0);
    for i in 0..1000 {
        let status = random_status(&mut rng, 186, [0.005, 0.02, 0.05, 0.2][i % 4]);
        let fast = check_connectivity(&case, &status)
            .map_err(|e| e.to_string())?
            .connected;
        agree += usize::from(fast == bfs_connected(&case, &status));
        islanded += usize::from(!fast);
    }
    check(
        agree == 1000,
        format!("{agree}/1000 agree ({islanded} islanded)"),
    )
}

fn gradient_fidelity() -> Verdict {
    let h = 1e-5;
    let mut worst = [0.0_f64; 3];
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, 3, 5);
        let c = random_matrix(&mut rng, 3, 4);

        let dueling = DuelingNet::init(5, &[8, 8], 4, &mut rng);
        let (_, cache) = dueling.forward(&x).unwrap();
        let g = dueling.backward(&cache, &c).unwrap();
        let loss = |n: &DuelingNet| (n.forward(&x).unwrap().0 * &c).sum();
        worst[0] = worst[0].max(max_gradient_error(&dueling, &g, loss, h));

        let policy = PolicyNet::init(5, &[8, 8], 4, &mut rng);
        let (p, _, cache) = policy.forward(&x).unwrap();
        let row_sum = c.sum_axis(Axis(1)).insert_axis(Axis(1));
        let grad_logits = &c - &(&p * &row_sum);
        let g = policy.backward(&cache, &grad_logits).unwrap();
        let loss = |n: &PolicyNet| (n.forward(&x).unwrap().1 * &c).sum();
        worst[1] = worst[1].max(max_gradient_error(&policy, &g, loss, h));

        let value = Mlp::init(&[5, 8, 8, 1], false, &mut rng);
        let cv = random_matrix(&mut rng, 3, 1);
        let (_, cache) = value.forward(&x).unwrap();
        let (g, _) = value.backward(&cache, &cv).unwrap();
        let loss = |n: &Mlp| (n.forward(&x).unwrap().0 * &cv).sum();
        worst[2] = worst[2].max(max_gradient_error(&value, &g, loss, h));
    }
    check(
        worst.iter().all(|w| *w < 1e-4),
        format!(
            "max relative error dueling {:.1e}, policy {:.1e}, value {:.1e} over 20 seeds",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn dueling_identity() -> Verdict {
    let mut worst = 0.0_f64;
    for draw in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let actions = rng.random_range(2..12);
        let net = DuelingNet::init(6, &[12], actions, &mut rng);
        let x = random_matrix(&mut rng, 1, 6).mapv(|v| v * 10.0);
        let (q, cache) = net.forward(&x).unwrap();
        let mean = q.mean_axis(Axis(1)).unwrap()[0];
        worst = worst.max((mean - cache.value[[0, 0]]).abs());
    }
    check(
        worst < 1e-9,
        format!("max |mean_a Q - V| = {worst:.1e} over 1000 draws"),
    )
}

fn constant_net_policy(logits: &[f64]) -> PolicyNet {
    let mut head = Dense::zeros(2, logits.len());
    head.bias.iter_mut().zip(logits).for_each(|(b, l)| *b = *l);
    PolicyNet {
        trunk: Mlp {
            layers: vec![Dense::zeros(3, 2)],
            relu_output: true,
        },
        logits: head,
    }
}

fn constant_net_critic(value: f64, advantage: &[f64]) -> DuelingNet {
    let mut v = Dense::zeros(2, 1);
    v.bias[0] = value;
    let mut a = Dense::zeros(2, advantage.len());
    a.bias.iter_mut().zip(advantage).for_each(|(b, x)| *b = *x);
    DuelingNet {
        trunk: Mlp {
            layers: vec![Dense::zeros(3, 2)],
            relu_output: true,
        },
        value: v,
        advantage: a,
    }
}

fn target_formula() -> Verdict {
    let config = DdsacConfig {
        hidden: vec![2],
        ..DdsacConfig::default()
    };
    let mut agent = DdsacAgent::new(3, 2, config).map_err(|e| e.to_string())?;
    agent.policy = constant_net_policy(&[0.0, 0.0]);
    agent.target1 = constant_net_critic(2.0, &[-1.0, 1.0]);
    agent.target2 = constant_net_critic(4.0, &[0.0, 0.0]);
    agent.log_alpha = f64::NEG_INFINITY;
    let sample = |done| Transition {
        state: vec![0.0; 3],
        action: 0,
        reward: 1.0,
        next_state: vec![0.0; 3],
        done,
    };
    let (live, terminal) = (sample(false), sample(true));
    let y = agent
        .compute_targets(&[&live, &terminal])
        .map_err(|e| e.to_string())?;
    check(
        (y[0] - 2.98).abs() < 1e-10 && y[1] == 1.0,
        format!("y = {:.12}, terminal y = {}", y[0], y[1]),
    )
}

fn temperature_control() -> Verdict {
    let start = Instant::now();
    let state = vec![0.5, -0.2, 1.0, 0.0];
    let config = DdsacConfig {
        seed: 1,
        ..DdsacConfig::default()
    };
    let mut agent = DdsacAgent::new(state.len(), 2, config).map_err(|e| e.to_string())?;
    for i in 0..64 {
        agent.store(Transition {
            state: state.clone(),
            action: i % 2,
            reward: 1.0,
            next_state: state.clone(),
            done: true,
        });
    }
    for _ in 0..2000 {
        agent.update_step().map_err(|e| e.to_string())?;
    }
    let h = agent.policy_entropy(&state).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let target = agent.target_entropy;
    check(
        (h - target).abs() <= 0.1 && secs < 30.0,
        format!(
            "entropy {h:.4} vs target {target:.4} after 2000 updates, alpha {:.4}, {secs:.1} s",
            agent.alpha()
        ),
    )
}

fn soft_update_contraction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let critic = DuelingNet::init(6, &[10, 10], 5, &mut rng);
    let mut target = DuelingNet::init(6, &[10, 10], 5, &mut rng);
    let tau = 0.005;
    let gap = |t: &DuelingNet| -> Vec<f64> {
        t.tensors()
            .iter()
            .zip(critic.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
            .collect()
    };
    let mut worst = 0.0_f64;
    let mut prev = gap(&target);
    for _ in 0..100 {
        gridswitch_core::nn::soft_update(&mut target, &critic, tau).map_err(|e| e.to_string())?;
        let now = gap(&target);
        for (n, p) in now.iter().zip(&prev) {
            worst = worst.max((n - (1.0 - tau) * p).abs());
        }
        prev = now;
    }
    check(
        worst < 1e-12,
        format!("max deviation from (1 - tau) contraction {worst:.1e} over 100 steps"),
    )
}

fn reward_components() -> Verdict {
    let case = case118();
    let status = TopologyStatus::all_in(186);
    let mut sol = solve_newton_raphson(&case, &status, SolverOptions::default())
        .map_err(|e| e.to_string())?;
    sol.v_mag.iter_mut().for_each(|v| *v = 1.0);
    sol.v_mag[17] = 0.93;
    let voltage_only = EnvConfig {
        w1: 0.0,
        w3: 0.0,
        w4: 0.0,
        w5: Some(0.0),
        ..EnvConfig::default()
    };
    let low = compute_reward(&case, &sol, &status, 0.0, &voltage_only).voltage_term;
    sol.v_mag[17] = 1.07;
    let high = compute_reward(&case, &sol, &status, 0.0, &voltage_only).voltage_term;

    let mut open = TopologyStatus::all_in(186);
    open.set(3, false);
    open.set(90, false);
    let sol =
        solve_newton_raphson(&case, &open, SolverOptions::default()).map_err(|e| e.to_string())?;
    let lines = compute_reward(&case, &sol, &open, 0.0, &EnvConfig::default()).open_lines_term;
    check(
        (low - 2.0).abs() < 1e-12
            && (high - 2.0).abs() < 1e-12
            && (lines - 20.0 / 186.0).abs() < 1e-12,
        format!("0.93 pu -> {low:.15}, 1.07 pu -> {high:.15}, 2 of 186 open -> {lines:.15}"),
    )
}

fn out_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn learning_config(algorithm: Algorithm, seeds: Vec<u64>, out: PathBuf) -> RunConfig {
    RunConfig {
        case_path: fixture_path("case14.m"),
        algorithm,
        episodes: 200,
        seeds,
        out_dir: out,
        env: EnvConfig {
            horizon: 10,
            load_noise: 0.0,
            ..EnvConfig::default()
        },
        ..RunConfig::default()
    }
}

fn final_mean(rewards: &[f64]) -> f64 {
    rewards[rewards.len() - 10..].iter().sum::<f64>() / 10.0
}

fn learning_smoke() -> Verdict {
    let start = Instant::now();
    let config = learning_config(Algorithm::Ddsac, vec![1, 2, 3, 4, 5], out_dir("learning"));
    let random = random_policy_mean(Arc::new(case14()), config.env_for_seed(0), 10_000, 0)
        .map_err(|e| e.to_string())?;
    let (runs, _) = run_multi_seed(&config).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| {
            final_mean(
                &r.metrics
                    .iter()
                    .map(|m| m.cumulative_reward)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let ok = finals.iter().all(|f| *f > random) && secs < 600.0;
    let shown: Vec<String> = finals.iter().map(|f| format!("{f:.1}")).collect();
    check(
        ok,
        format!(
            "random-policy mean {random:.1}; final-10 means [{}]; {secs:.0} s",
            shown.join(", ")
        ),
    )
}

fn determinism() -> Verdict {
    let mut details = Vec::new();
    let mut ok = true;
    for algorithm in [Algorithm::Ddsac, Algorithm::Ddqn, Algorithm::Ppo] {
        let mut bytes = Vec::new();
        for attempt in 0..2 {
            let mut config = learning_config(
                algorithm,
                vec![7],
                out_dir(&format!("determinism_{algorithm}_{attempt}")),
            );
            config.episodes = 8;
            config.env.load_noise = 0.05;
            let out = run_training(&config, 7).map_err(|e| e.to_string())?;
            bytes.push(std::fs::read(&out.metrics_path).map_err(|e| e.to_string())?);
        }
        let same = bytes[0] == bytes[1];
        ok &= same;
        details.push(format!(
            "{algorithm} {}",
            if same { "identical" } else { "differs" }
        ));
    }
    check(ok, details.join(", "))
}

/// Ten-seed comparison of the three agents. Reported, not judged.
/// Per-seed cumulative rewards of the DDSAC comparison runs, by seed.
fn comparison() -> Vec<(u64, Vec<f64>)> {
    let dir = out_dir("comparison");
    let mut ddsac = Vec::new();
    for algorithm in [Algorithm::Ddsac, Algorithm::Ddqn, Algorithm::Ppo] {
        let config = learning_config(algorithm, (1..=10).collect(), dir.clone());
        match run_multi_seed(&config) {
            Ok((runs, series)) => {
                if algorithm == Algorithm::Ddsac {
                    ddsac = runs
                        .iter()
                        .map(|r| {
                            (
                                r.seed,
                                r.metrics.iter().map(|m| m.cumulative_reward).collect(),
                            )
                        })
                        .collect();
                }
                let reward = series
                    .iter()
                    .find(|s| s.metric == "cumulative_reward")
                    .unwrap();
                let n = reward.mean.len();
                let last = reward.mean[n - 10..].iter().sum::<f64>() / 10.0;
                let se = reward.stderr[n - 10..].iter().sum::<f64>() / 10.0;
                println!("  comparison {algorithm}: final-10 mean reward {last:.1} (mean stderr {se:.1})");
            }
            Err(e) => println!("  comparison {algorithm}: failed: {e}"),
        }
    }
    println!("  comparison aggregates written to {}", dir.display());
    ddsac
}

/// Seeds 1..=5 of the comparison: a 20-episode moving average that never decreases in at least 4.
fn moving_average_trend(runs: &[(u64, Vec<f64>)]) -> Verdict {
    let mut monotone = 0;
    let mut detail = Vec::new();
    for (seed, rewards) in runs.iter().filter(|(s, _)| *s <= 5) {
        let ma: Vec<f64> = rewards
            .windows(20)
            .map(|w| w.iter().sum::<f64>() / 20.0)
            .collect();
        let drops = ma.windows(2).filter(|w| w[1] < w[0]).count();
        if drops == 0 {
            monotone += 1;
        }
        detail.push(format!(
            "seed {seed}: {:.0} -> {:.0}, {drops} drops",
            ma[0],
            ma[ma.len() - 1]
        ));
    }
    let detail = format!("{monotone}/5 monotone; {}", detail.join(", "));
    if monotone >= 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("power-flow correctness", power_flow_reference),
        ("conservation", conservation_fuzz),
        ("islanding oracle equivalence", islanding_oracle),
        ("gradient fidelity", gradient_fidelity),
        ("dueling identity", dueling_identity),
        ("soft target formula", target_formula),
        ("temperature control", temperature_control),
        ("soft update", soft_update_contraction),
        ("reward function", reward_components),
        ("learning smoke test", learning_smoke),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let verdict =
            catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {:>2} {name}: {tag} ({detail})", i + 1);
        let _ = std::io::stdout().flush();
        if verdict.is_err() {
            failed.push(i + 1);
        }
    }
    let runs = comparison();
    let trend = catch_unwind(AssertUnwindSafe(|| moving_average_trend(&runs)))
        .unwrap_or_else(|_| Err("panicked".to_string()));
    match &trend {
        Ok(d) => println!("training trend: PASS ({d})"),
        Err(d) => {
            println!("training trend: FAIL ({d})");
            failed.push(12);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
