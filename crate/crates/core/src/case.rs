//! MATPOWER case ingestion.
//!
//! Only the subset consumed by the power-flow and reward computations is
//! supported: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and the
//! optional polynomial `mpc.gencost`. `mpc.version` and `mpc.areas` are read
//! and ignored; every other `mpc.*` field is rejected.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

const BUS_COLUMNS: usize = 13;
const GEN_COLUMNS: usize = 10;
const BRANCH_COLUMNS: usize = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("malformed case at line {line}: {reason}")]
    MalformedCase { line: usize, reason: String },
    #[error("missing section mpc.{0}")]
    MissingSection(String),
    #[error("duplicate bus id {0}")]
    DuplicateBusId(i64),
}

fn malformed(line: usize, reason: impl Into<String>) -> CaseError {
    CaseError::MalformedCase {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

impl BusKind {
    fn code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: i64,
    pub kind: BusKind,
    /// MW
    pub p_load: f64,
    /// MVAr
    pub q_load: f64,
    /// MW consumed at 1 pu
    pub g_shunt: f64,
    /// MVAr injected at 1 pu
    pub b_shunt: f64,
    pub v_mag_init: f64,
    /// degrees
    pub v_ang_init: f64,
    pub base_kv: f64,
    pub v_max: f64,
    pub v_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: i64,
    pub to_bus: i64,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    /// MVA, 0 means unlimited.
    pub rate_a: f64,
    /// Off-nominal turns ratio; a file value of 0 is stored as 1.0.
    pub tap_ratio: f64,
    /// degrees
    pub phase_shift: f64,
    pub status_init: bool,
}

/// Generator cost in $/h as a polynomial in MW, highest degree first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostPolynomial {
    pub coefficients: Vec<f64>,
}

impl CostPolynomial {
    pub fn zero() -> Self {
        CostPolynomial {
            coefficients: vec![0.0],
        }
    }

    /// Horner evaluation at `p_mw`.
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, &c| acc * p_mw + c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: i64,
    pub p_set: f64,
    pub q_set: f64,
    pub v_set: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub status: bool,
    pub cost: CostPolynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub bus_index: HashMap<i64, usize>,
}

impl GridCase {
    /// Builds the id → dense position map; fails on repeated bus ids.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, CaseError> {
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (pos, bus) in buses.iter().enumerate() {
            if bus_index.insert(bus.id, pos).is_some() {
                return Err(CaseError::DuplicateBusId(bus.id));
            }
        }
        Ok(GridCase {
            base_mva,
            buses,
            branches,
            generators,
            bus_index,
        })
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// Dense position of an external bus id.
    pub fn pos(&self, id: i64) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    /// Dense position of the first slack bus, if any.
    pub fn slack_pos(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Initial line statuses in branch order.
    pub fn initial_status(&self) -> Vec<bool> {
        self.branches.iter().map(|b| b.status_init).collect()
    }
}

/// All branches in file order, including ones initially out of service.
/// The returned positions define the action indexing used by the environment.
pub fn switchable_lines(case: &GridCase) -> Vec<usize> {
    (0..case.branches.len()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    NoSlack,
    MultipleSlack(Vec<i64>),
    /// Branch position with x = 0.
    ZeroReactance(usize),
    NegativeResistance(usize),
    NegativeRating(usize),
    UnresolvedBranchBus {
        branch: usize,
        bus: i64,
    },
    UnresolvedGeneratorBus {
        generator: usize,
        bus: i64,
    },
    VoltageBounds(i64),
    NonPositiveVoltage(i64),
    DispatchOutOfBounds(usize),
    EmptyCost(usize),
    NonFiniteCost(usize),
    NonPositiveBase,
    IndexMismatch,
}

/// Collects every invariant violation; an empty list means the case is usable.
pub fn validate(case: &GridCase) -> Vec<Issue> {
    let mut issues = Vec::new();
    if !(case.base_mva > 0.0) {
        issues.push(Issue::NonPositiveBase);
    }
    let index_ok = case.bus_index.len() == case.buses.len()
        && case
            .buses
            .iter()
            .enumerate()
            .all(|(pos, b)| case.bus_index.get(&b.id) == Some(&pos));
    if !index_ok {
        issues.push(Issue::IndexMismatch);
    }

    let slacks: Vec<i64> = case
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    match slacks.len() {
        0 => issues.push(Issue::NoSlack),
        1 => {}
        _ => issues.push(Issue::MultipleSlack(slacks)),
    }
    for bus in &case.buses {
        if !(bus.v_min < bus.v_max) {
            issues.push(Issue::VoltageBounds(bus.id));
        }
        if !(bus.v_mag_init > 0.0) {
            issues.push(Issue::NonPositiveVoltage(bus.id));
        }
    }

    for (k, br) in case.branches.iter().enumerate() {
        for bus in [br.from_bus, br.to_bus] {
            if case.pos(bus).is_none() {
                issues.push(Issue::UnresolvedBranchBus { branch: k, bus });
            }
        }
        if br.x == 0.0 {
            issues.push(Issue::ZeroReactance(k));
        }
        if br.r < 0.0 {
            issues.push(Issue::NegativeResistance(k));
        }
        if br.rate_a < 0.0 {
            issues.push(Issue::NegativeRating(k));
        }
    }

    for (k, g) in case.generators.iter().enumerate() {
        if case.pos(g.bus).is_none() {
            issues.push(Issue::UnresolvedGeneratorBus {
                generator: k,
                bus: g.bus,
            });
        }
        if g.status && !(g.p_min <= g.p_set && g.p_set <= g.p_max) {
            issues.push(Issue::DispatchOutOfBounds(k));
        }
        if g.cost.coefficients.is_empty() {
            issues.push(Issue::EmptyCost(k));
        } else if !g.cost.eval(g.p_min).is_finite() || !g.cost.eval(g.p_max).is_finite() {
            issues.push(Issue::NonFiniteCost(k));
        }
    }
    issues
}

struct Matrix {
    start_line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

enum Section {
    Keep(String),
    Skip,
}

/// Parses MATPOWER case text into a [`GridCase`].
pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    let mut base_mva: Option<f64> = None;
    let mut matrices: HashMap<String, Matrix> = HashMap::new();
    let mut open: Option<(Section, Matrix)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }

        if let Some((section, matrix)) = open.as_mut() {
            let (body, closed) = match line.find(']') {
                Some(end) => (&line[..end], true),
                None => (line, false),
            };
            if matches!(section, Section::Keep(_)) {
                push_rows(matrix, body, line_no)?;
            }
            if closed {
                let (section, matrix) = open.take().unwrap();
                if let Section::Keep(name) = section {
                    matrices.insert(name, matrix);
                }
            }
            continue;
        }

        if line.starts_with("function") {
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            return Err(malformed(line_no, format!("unexpected statement `{line}`")));
        };
        let Some((name, rhs)) = rest.split_once('=') else {
            return Err(malformed(line_no, "expected assignment"));
        };
        let name = name.trim();
        let rhs = rhs.trim();
        match name {
            "version" => continue,
            "baseMVA" => {
                let value = rhs.trim_end_matches(';').trim();
                let v = value
                    .parse::<f64>()
                    .map_err(|_| malformed(line_no, format!("bad baseMVA `{value}`")))?;
                base_mva = Some(v);
            }
            "bus" | "gen" | "branch" | "gencost" | "areas" => {
                let Some(body) = rhs.strip_prefix('[') else {
                    return Err(malformed(line_no, format!("mpc.{name} must be a matrix")));
                };
                if matrices.contains_key(name) {
                    return Err(malformed(line_no, format!("mpc.{name} defined twice")));
                }
                let section = if name == "areas" {
                    Section::Skip
                } else {
                    Section::Keep(name.to_string())
                };
                let mut matrix = Matrix {
                    start_line: line_no,
                    rows: Vec::new(),
                };
                let (body, closed) = match body.find(']') {
                    Some(end) => (&body[..end], true),
                    None => (body, false),
                };
                if matches!(section, Section::Keep(_)) {
                    push_rows(&mut matrix, body, line_no)?;
                }
                if closed {
                    if let Section::Keep(name) = section {
                        matrices.insert(name, matrix);
                    }
                } else {
                    open = Some((section, matrix));
                }
            }
            other => {
                return Err(malformed(
                    line_no,
                    format!("unsupported section mpc.{other}"),
                ))
            }
        }
    }

    if let Some((_, matrix)) = open {
        return Err(malformed(matrix.start_line, "unterminated matrix"));
    }

    let base_mva = base_mva.ok_or_else(|| CaseError::MissingSection("baseMVA".into()))?;
    let bus_rows = matrices
        .remove("bus")
        .ok_or_else(|| CaseError::MissingSection("bus".into()))?;
    let gen_rows = matrices
        .remove("gen")
        .ok_or_else(|| CaseError::MissingSection("gen".into()))?;
    let branch_rows = matrices
        .remove("branch")
        .ok_or_else(|| CaseError::MissingSection("branch".into()))?;
    let cost_rows = matrices.remove("gencost");

    let buses = bus_rows
        .rows
        .iter()
        .map(|(line, row)| parse_bus(*line, row))
        .collect::<Result<Vec<_>, _>>()?;

    let costs = match cost_rows {
        Some(m) => m
            .rows
            .iter()
            .map(|(line, row)| parse_cost(*line, row))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    if !costs.is_empty() && costs.len() < gen_rows.rows.len() {
        return Err(malformed(
            gen_rows.start_line,
            format!(
                "gencost has {} rows for {} generators",
                costs.len(),
                gen_rows.rows.len()
            ),
        ));
    }

    let generators = gen_rows
        .rows
        .iter()
        .enumerate()
        .map(|(k, (line, row))| {
            let cost = costs.get(k).cloned().unwrap_or_else(CostPolynomial::zero);
            parse_gen(*line, row, cost)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let branches = branch_rows
        .rows
        .iter()
        .map(|(line, row)| parse_branch(*line, row))
        .collect::<Result<Vec<_>, _>>()?;

    let case = GridCase::new(base_mva, buses, branches, generators)?;

    for ((line, _), br) in branch_rows.rows.iter().zip(&case.branches) {
        for bus in [br.from_bus, br.to_bus] {
            if case.pos(bus).is_none() {
                return Err(malformed(
                    *line,
                    format!("branch references unknown bus {bus}"),
                ));
            }
        }
    }
    for ((line, _), g) in gen_rows.rows.iter().zip(&case.generators) {
        if case.pos(g.bus).is_none() {
            return Err(malformed(
                *line,
                format!("generator references unknown bus {}", g.bus),
            ));
        }
    }
    Ok(case)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn push_rows(matrix: &mut Matrix, body: &str, line_no: usize) -> Result<(), CaseError> {
    for segment in body.split(';') {
        let fields: Vec<&str> = segment
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| malformed(line_no, format!("not a number: `{f}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        matrix.rows.push((line_no, row));
    }
    Ok(())
}

fn need(row: &[f64], min: usize, what: &str, line: usize) -> Result<(), CaseError> {
    if row.len() < min {
        return Err(malformed(
            line,
            format!("{what} row has {} columns, need {min}", row.len()),
        ));
    }
    Ok(())
}

fn as_id(v: f64, line: usize) -> Result<i64, CaseError> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(malformed(line, format!("bus id {v} is not an integer")));
    }
    Ok(v as i64)
}

fn parse_bus(line: usize, row: &[f64]) -> Result<Bus, CaseError> {
    need(row, BUS_COLUMNS, "bus", line)?;
    let kind = match row[1] as i64 {
        1 => BusKind::Pq,
        2 => BusKind::Pv,
        3 => BusKind::Slack,
        other => return Err(malformed(line, format!("unsupported bus type {other}"))),
    };
    Ok(Bus {
        id: as_id(row[0], line)?,
        kind,
        p_load: row[2],
        q_load: row[3],
        g_shunt: row[4],
        b_shunt: row[5],
        v_mag_init: row[7],
        v_ang_init: row[8],
        base_kv: row[9],
        v_max: row[11],
        v_min: row[12],
    })
}

fn parse_gen(line: usize, row: &[f64], cost: CostPolynomial) -> Result<Generator, CaseError> {
    need(row, GEN_COLUMNS, "gen", line)?;
    Ok(Generator {
        bus: as_id(row[0], line)?,
        p_set: row[1],
        q_set: row[2],
        v_set: row[5],
        status: row[7] > 0.0,
        p_max: row[8],
        p_min: row[9],
        cost,
    })
}

fn parse_branch(line: usize, row: &[f64]) -> Result<Branch, CaseError> {
    need(row, BRANCH_COLUMNS, "branch", line)?;
    Ok(Branch {
        from_bus: as_id(row[0], line)?,
        to_bus: as_id(row[1], line)?,
        r: row[2],
        x: row[3],
        b_charging: row[4],
        rate_a: row[5],
        tap_ratio: if row[8] == 0.0 { 1.0 } else { row[8] },
        phase_shift: row[9],
        status_init: row[10] > 0.0,
    })
}

fn parse_cost(line: usize, row: &[f64]) -> Result<CostPolynomial, CaseError> {
    need(row, 4, "gencost", line)?;
    if row[0] != 2.0 {
        return Err(malformed(
            line,
            format!(
                "only polynomial gencost (model 2) is supported, got {}",
                row[0]
            ),
        ));
    }
    let n = row[3];
    if n < 1.0 || n.fract() != 0.0 {
        return Err(malformed(line, format!("bad coefficient count {n}")));
    }
    let n = n as usize;
    if row.len() < 4 + n {
        return Err(malformed(
            line,
            format!(
                "gencost declares {n} coefficients but has {}",
                row.len() - 4
            ),
        ));
    }
    Ok(CostPolynomial {
        coefficients: row[4..4 + n].to_vec(),
    })
}

/// Writes a case back to MATPOWER text. Columns outside [`GridCase`] are
/// filled with neutral values, so `parse_case(&write_case(c)) == c`.
pub fn write_case(case: &GridCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = gridcase");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {:?};", case.base_mva);
    let _ = writeln!(out, "mpc.bus = [");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t1\t{:?}\t{:?}\t{:?}\t1\t{:?}\t{:?};",
            b.id,
            b.kind.code(),
            b.p_load,
            b.q_load,
            b.g_shunt,
            b.b_shunt,
            b.v_mag_init,
            b.v_ang_init,
            b.base_kv,
            b.v_max,
            b.v_min
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t{:?}\t{:?}\t9999\t-9999\t{:?}\t{:?}\t{}\t{:?}\t{:?};",
            g.bus,
            g.p_set,
            g.q_set,
            g.v_set,
            case.base_mva,
            u8::from(g.status),
            g.p_max,
            g.p_min
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b_charging,
            br.rate_a,
            br.rate_a,
            br.rate_a,
            br.tap_ratio,
            br.phase_shift,
            u8::from(br.status_init)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gencost = [");
    for g in &case.generators {
        let _ = write!(out, "\t2\t0\t0\t{}", g.cost.coefficients.len());
        for c in &g.cost.coefficients {
            let _ = write!(out, "\t{c:?}");
        }
        let _ = writeln!(out, ";");
    }
    let _ = writeln!(out, "];");
    out
}
