use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    build_admittance, check_connectivity, compute_branch_quantities, PowerFlowError, TopologyStatus,
};
use crate::case::{BusKind, GridCase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Infinity-norm bound on the per-unit power mismatch.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Per unit; zero on de-energized buses.
    pub v_mag: Vec<f64>,
    /// Radians; zero on de-energized buses.
    pub v_ang: Vec<f64>,
    /// MW per generator, slack units after absorbing the residual.
    pub p_gen: Vec<f64>,
    pub s_from: Vec<Complex64>,
    pub s_to: Vec<Complex64>,
    pub p_loss_per_line: Vec<f64>,
    pub total_loss: f64,
    /// Buses in the slack component.
    pub energized: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    /// Apparent flow per line in MVA, the larger of the two ends.
    pub fn apparent_flow(&self) -> Vec<f64> {
        self.s_from
            .iter()
            .zip(&self.s_to)
            .map(|(f, t)| f.norm().max(t.norm()))
            .collect()
    }
}

/// Solves at the case's nominal loads.
pub fn solve_newton_raphson(
    case: &GridCase,
    status: &TopologyStatus,
    options: SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let p: Vec<f64> = case.buses.iter().map(|b| b.p_load).collect();
    let q: Vec<f64> = case.buses.iter().map(|b| b.q_load).collect();
    solve_with_loads(case, status, &p, &q, options)
}

/// Solves with per-bus loads (MW, MVAr) overriding the case values.
/// Generator active outputs are fixed at their set points except at the
/// slack bus; reactive limits are not enforced.
pub fn solve_with_loads(
    case: &GridCase,
    status: &TopologyStatus,
    p_load: &[f64],
    q_load: &[f64],
    options: SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = case.n_bus();
    if p_load.len() != n || q_load.len() != n {
        return Err(PowerFlowError::DimensionMismatch {
            expected: n,
            got: p_load.len().min(q_load.len()),
        });
    }
    let slack = case.slack_pos().ok_or(PowerFlowError::NoSlack)?;
    let conn = check_connectivity(case, status)?;
    if !conn.connected {
        return Err(PowerFlowError::IslandedInput);
    }
    let energized = conn.energized();
    let y = build_admittance(case, status)?.y_bus;
    let base = case.base_mva;

    let mut s_spec = vec![Complex64::new(0.0, 0.0); n];
    let mut v_set: Vec<Option<f64>> = vec![None; n];
    for g in case.generators.iter().filter(|g| g.status) {
        let i = case.bus_index[&g.bus];
        s_spec[i] += Complex64::new(g.p_set, g.q_set) / base;
        v_set[i].get_or_insert(g.v_set);
    }
    for i in 0..n {
        s_spec[i] -= Complex64::new(p_load[i], q_load[i]) / base;
    }

    let mut pv = Vec::new();
    let mut pq = Vec::new();
    for (i, bus) in case.buses.iter().enumerate() {
        if i == slack || !energized[i] {
            continue;
        }
        match (bus.kind, v_set[i]) {
            (BusKind::Pv | BusKind::Slack, Some(_)) => pv.push(i),
            _ => pq.push(i),
        }
    }
    let pvpq: Vec<usize> = pv.iter().chain(&pq).copied().collect();
    let n_ang = pvpq.len();
    let dim = n_ang + pq.len();
    let mut ang_col = vec![usize::MAX; n];
    let mut mag_col = vec![usize::MAX; n];
    for (c, &i) in pvpq.iter().enumerate() {
        ang_col[i] = c;
    }
    for (c, &i) in pq.iter().enumerate() {
        mag_col[i] = n_ang + c;
    }

    let mut v_mag: Vec<f64> = Vec::with_capacity(n);
    let mut v_ang: Vec<f64> = Vec::with_capacity(n);
    for (i, bus) in case.buses.iter().enumerate() {
        if energized[i] {
            v_mag.push(v_set[i].unwrap_or(bus.v_mag_init));
            v_ang.push(bus.v_ang_init.to_radians());
        } else {
            v_mag.push(0.0);
            v_ang.push(0.0);
        }
    }

    let mismatch = |v: &[Complex64]| -> (Vec<Complex64>, Vec<f64>) {
        let current = y.mul_vec(v);
        let mis: Vec<Complex64> = (0..n)
            .map(|i| v[i] * current[i].conj() - s_spec[i])
            .collect();
        let mut f = Vec::with_capacity(dim);
        f.extend(pvpq.iter().map(|&i| mis[i].re));
        f.extend(pq.iter().map(|&i| mis[i].im));
        (current, f)
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut max_mismatch;
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(v_mag[i], v_ang[i]))
            .collect();
        let (current, f) = mismatch(&v);
        max_mismatch = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !max_mismatch.is_finite() {
            break;
        }
        if max_mismatch < options.tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }

        // Polar Jacobian from the complex derivatives dS/dVa and dS/dVm.
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for &i in &pvpq {
            let ri = ang_col[i];
            let qi = mag_col[i];
            let vn_i = v[i] / v_mag[i];
            for &(k, yik) in y.row(i) {
                let mut ds_dva = -Complex64::i() * v[i] * (yik * v[k]).conj();
                let mut ds_dvm = v[i] * (yik * (v[k] / v_mag[k].max(f64::MIN_POSITIVE))).conj();
                if k == i {
                    ds_dva += Complex64::i() * v[i] * current[i].conj();
                    ds_dvm += current[i].conj() * vn_i;
                }
                if ang_col[k] != usize::MAX {
                    jac[(ri, ang_col[k])] = ds_dva.re;
                    if qi != usize::MAX {
                        jac[(qi, ang_col[k])] = ds_dva.im;
                    }
                }
                if mag_col[k] != usize::MAX {
                    jac[(ri, mag_col[k])] = ds_dvm.re;
                    if qi != usize::MAX {
                        jac[(qi, mag_col[k])] = ds_dvm.im;
                    }
                }
            }
        }
        let rhs = DVector::from_iterator(dim, f.iter().map(|x| -x));
        let Some(dx) = jac.lu().solve(&rhs) else {
            break;
        };
        if dx.iter().any(|x| !x.is_finite()) {
            break;
        }
        for &i in &pvpq {
            v_ang[i] += dx[ang_col[i]];
        }
        for &i in &pq {
            v_mag[i] += dx[mag_col[i]];
        }
        iterations += 1;
    }

    let v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(v_mag[i], v_ang[i]))
        .collect();
    let current = y.mul_vec(&v);
    let slack_injection = v[slack] * current[slack].conj() * base;
    let slack_p_total = slack_injection.re + p_load[slack];

    let slack_id = case.buses[slack].id;
    let slack_units: Vec<usize> = case
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.status && g.bus == slack_id)
        .map(|(k, _)| k)
        .collect();
    let p_max_sum: f64 = slack_units.iter().map(|&k| case.generators[k].p_max).sum();
    let p_gen: Vec<f64> = case
        .generators
        .iter()
        .enumerate()
        .map(|(k, g)| {
            if !g.status {
                0.0
            } else if g.bus != slack_id {
                g.p_set
            } else if p_max_sum > 0.0 {
                slack_p_total * g.p_max / p_max_sum
            } else {
                debug_assert!(slack_units.contains(&k));
                slack_p_total / slack_units.len() as f64
            }
        })
        .collect();

    let flows = compute_branch_quantities(case, status, &v_mag, &v_ang)?;
    Ok(PowerFlowSolution {
        v_mag,
        v_ang,
        p_gen,
        s_from: flows.s_from,
        s_to: flows.s_to,
        p_loss_per_line: flows.p_loss,
        total_loss: flows.total_loss,
        energized,
        converged,
        iterations,
        max_mismatch,
    })
}
