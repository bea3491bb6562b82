use num_complex::Complex64;

use super::{PowerFlowError, TopologyStatus};
use crate::case::{Branch, GridCase};

/// π-model two-port of one branch, per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub y_ff: Complex64,
    pub y_ft: Complex64,
    pub y_tf: Complex64,
    pub y_tt: Complex64,
}

/// Row-compressed square complex matrix. Columns within a row are sorted and
/// every row stores its diagonal, even when it is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComplex {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseComplex {
    fn with_diagonal(n: usize) -> Self {
        SparseComplex {
            rows: (0..n)
                .map(|i| vec![(i, Complex64::new(0.0, 0.0))])
                .collect(),
        }
    }

    fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let row = &mut self.rows[i];
        match row.iter_mut().find(|(c, _)| *c == j) {
            Some((_, x)) => *x += v,
            None => row.push((j, v)),
        }
    }

    fn finish(&mut self) {
        for row in &mut self.rows {
            row.sort_by_key(|(c, _)| *c);
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i]
            .iter()
            .find(|(c, _)| *c == j)
            .map(|(_, v)| *v)
            .unwrap_or_default()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `self · v`
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(j, y)| y * v[*j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row {
                out[i][*j] = *v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceModel {
    pub y_bus: SparseComplex,
    /// One quadruple per branch regardless of status.
    pub branch_admittances: Vec<BranchAdmittance>,
}

/// Standard MATPOWER π-model with complex tap `ratio · e^{j·shift}`.
pub fn branch_admittance(branch: &Branch) -> BranchAdmittance {
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(branch.r, branch.x);
    let half_b = Complex64::new(0.0, branch.b_charging / 2.0);
    let tap = Complex64::from_polar(branch.tap_ratio, branch.phase_shift.to_radians());
    let y_tt = ys + half_b;
    BranchAdmittance {
        y_ff: y_tt / (tap * tap.conj()),
        y_ft: -ys / tap.conj(),
        y_tf: -ys / tap,
        y_tt,
    }
}

pub fn build_admittance(
    case: &GridCase,
    status: &TopologyStatus,
) -> Result<AdmittanceModel, PowerFlowError> {
    status.check_len(case.n_branch())?;
    let mut y_bus = SparseComplex::with_diagonal(case.n_bus());
    for (i, bus) in case.buses.iter().enumerate() {
        let shunt = Complex64::new(bus.g_shunt, bus.b_shunt) / case.base_mva;
        y_bus.add(i, i, shunt);
    }
    let mut branch_admittances = Vec::with_capacity(case.n_branch());
    for (k, br) in case.branches.iter().enumerate() {
        let y = branch_admittance(br);
        branch_admittances.push(y);
        if !status.is_in(k) {
            continue;
        }
        let f = case.bus_index[&br.from_bus];
        let t = case.bus_index[&br.to_bus];
        y_bus.add(f, f, y.y_ff);
        y_bus.add(f, t, y.y_ft);
        y_bus.add(t, f, y.y_tf);
        y_bus.add(t, t, y.y_tt);
    }
    y_bus.finish();
    Ok(AdmittanceModel {
        y_bus,
        branch_admittances,
    })
}
