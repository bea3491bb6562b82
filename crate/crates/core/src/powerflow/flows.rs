use num_complex::Complex64;

use super::{branch_admittance, PowerFlowError, TopologyStatus};
use crate::case::GridCase;

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlows {
    /// MVA injected into the branch at its from end.
    pub s_from: Vec<Complex64>,
    /// MVA injected into the branch at its to end.
    pub s_to: Vec<Complex64>,
    /// MW, `Re(s_from) + Re(s_to)`.
    pub p_loss: Vec<f64>,
    pub total_loss: f64,
}

/// Branch end flows from bus voltages (per unit magnitude, radians).
/// Open branches report zero flow and zero loss.
pub fn compute_branch_quantities(
    case: &GridCase,
    status: &TopologyStatus,
    v_mag: &[f64],
    v_ang: &[f64],
) -> Result<BranchFlows, PowerFlowError> {
    status.check_len(case.n_branch())?;
    let zero = Complex64::new(0.0, 0.0);
    let n = case.n_branch();
    let mut flows = BranchFlows {
        s_from: vec![zero; n],
        s_to: vec![zero; n],
        p_loss: vec![0.0; n],
        total_loss: 0.0,
    };
    for (k, br) in case.branches.iter().enumerate() {
        if !status.is_in(k) {
            continue;
        }
        let f = case.bus_index[&br.from_bus];
        let t = case.bus_index[&br.to_bus];
        let vf = Complex64::from_polar(v_mag[f], v_ang[f]);
        let vt = Complex64::from_polar(v_mag[t], v_ang[t]);
        let y = branch_admittance(br);
        let i_f = y.y_ff * vf + y.y_ft * vt;
        let i_t = y.y_tf * vf + y.y_tt * vt;
        let s_f = vf * i_f.conj() * case.base_mva;
        let s_t = vt * i_t.conj() * case.base_mva;
        flows.s_from[k] = s_f;
        flows.s_to[k] = s_t;
        flows.p_loss[k] = s_f.re + s_t.re;
    }
    flows.total_loss = flows.p_loss.iter().sum();
    Ok(flows)
}
