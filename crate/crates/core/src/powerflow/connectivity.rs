use super::{PowerFlowError, TopologyStatus};
use crate::case::GridCase;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connectivity {
    /// Every bus carrying load or in-service generation shares the slack
    /// bus's component.
    pub connected: bool,
    /// Component label per dense bus position, numbered in order of first
    /// appearance.
    pub component_of: Vec<usize>,
    pub slack_component: Option<usize>,
}

impl Connectivity {
    /// Buses energized from the slack bus.
    pub fn energized(&self) -> Vec<bool> {
        self.component_of
            .iter()
            .map(|c| Some(*c) == self.slack_component)
            .collect()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Buses that must stay energized: nonzero load or an in-service generator.
pub(crate) fn required_buses(case: &GridCase) -> Vec<bool> {
    let mut required: Vec<bool> = case
        .buses
        .iter()
        .map(|b| b.p_load != 0.0 || b.q_load != 0.0)
        .collect();
    for g in case.generators.iter().filter(|g| g.status) {
        if let Some(p) = case.pos(g.bus) {
            required[p] = true;
        }
    }
    required
}

pub fn check_connectivity(
    case: &GridCase,
    status: &TopologyStatus,
) -> Result<Connectivity, PowerFlowError> {
    status.check_len(case.n_branch())?;
    let n = case.n_bus();
    let mut sets = DisjointSet::new(n);
    for (k, br) in case.branches.iter().enumerate() {
        if status.is_in(k) {
            sets.union(case.bus_index[&br.from_bus], case.bus_index[&br.to_bus]);
        }
    }

    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let component_of: Vec<usize> = (0..n)
        .map(|i| {
            let root = sets.find(i);
            if label_of_root[root] == usize::MAX {
                label_of_root[root] = next;
                next += 1;
            }
            label_of_root[root]
        })
        .collect();

    let slack_component = case.slack_pos().map(|s| component_of[s]);
    let connected = match slack_component {
        Some(sc) => required_buses(case)
            .iter()
            .zip(&component_of)
            .all(|(req, c)| !req || *c == sc),
        None => false,
    };
    Ok(Connectivity {
        connected,
        component_of,
        slack_component,
    })
}
