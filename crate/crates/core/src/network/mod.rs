//! Kinon network topology.
//!
//! A network is a balanced digraph in which every directed link is paired
//! with a reciprocal link in the opposite direction. Each node owns a
//! compact list of link slots; slot `j` of node `i` carries outflow `O[j]`
//! towards its target and receives inflow `I[j]` from the same neighbour.
//!
//! Buffers are laid out with a fixed stride equal to the largest degree in
//! the network, so node `i` owns the slot range `i * stride .. i * stride + k_i`.

mod engine;
mod field;
mod grid;

pub use engine::{
    collide_all, init_singularity, propagate, step, step_with, CycleStats, Execution, NetworkState,
    Simulation,
};
pub use field::{FieldSnapshot, Pivot, Symmetry};
pub use grid::{build_grid, Boundary, DegreeClass, Direction, Geometry};

use crate::error::KinonError;
use crate::kernel::MAX_DEGREE;

/// A directed link as seen from its source: the target node and the slot
/// index of the reciprocal link at the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub target: usize,
    pub reciprocal_slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    stride: usize,
    degree: Vec<u8>,
    targets: Vec<u32>,
    reciprocal_slots: Vec<u8>,
    directions: Vec<Option<Direction>>,
    geometry: Option<Geometry>,
}

impl Network {
    /// Builds a network from explicit per-node link lists. Balance and
    /// reciprocity are not checked here; see [`validate_balanced`].
    pub fn from_adjacency(adjacency: &[Vec<Link>]) -> Result<Self, KinonError> {
        let lists: Vec<Vec<(Link, Option<Direction>)>> = adjacency
            .iter()
            .map(|links| links.iter().map(|&l| (l, None)).collect())
            .collect();
        Self::assemble(&lists, None)
    }

    pub(crate) fn assemble(
        adjacency: &[Vec<(Link, Option<Direction>)>],
        geometry: Option<Geometry>,
    ) -> Result<Self, KinonError> {
        let n = adjacency.len();
        if let Some((node, links)) = adjacency.iter().enumerate().find(|(_, l)| l.len() > MAX_DEGREE) {
            return Err(KinonError::DegreeTooLarge {
                node,
                degree: links.len(),
                max: MAX_DEGREE,
            });
        }
        let stride = adjacency.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut degree = Vec::with_capacity(n);
        let mut targets = vec![u32::MAX; n * stride];
        let mut reciprocal_slots = vec![u8::MAX; n * stride];
        let mut directions = vec![None; n * stride];
        for (i, links) in adjacency.iter().enumerate() {
            degree.push(links.len() as u8);
            for (j, (link, dir)) in links.iter().enumerate() {
                targets[i * stride + j] = u32::try_from(link.target).unwrap_or(u32::MAX);
                reciprocal_slots[i * stride + j] = u8::try_from(link.reciprocal_slot).unwrap_or(u8::MAX);
                directions[i * stride + j] = *dir;
            }
        }
        Ok(Self {
            stride,
            degree,
            targets,
            reciprocal_slots,
            directions,
            geometry,
        })
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    /// Slot stride of the buffer layout (the largest node degree).
    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn degree(&self, node: usize) -> usize {
        self.degree[node] as usize
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.degree.iter().map(|&d| d as usize)
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    pub fn link(&self, node: usize, slot: usize) -> Link {
        assert!(slot < self.degree(node), "slot {slot} out of range for node {node}");
        let at = node * self.stride + slot;
        Link {
            target: self.targets[at] as usize,
            reciprocal_slot: self.reciprocal_slots[at] as usize,
        }
    }

    pub fn links(&self, node: usize) -> impl Iterator<Item = Link> + '_ {
        (0..self.degree(node)).map(move |s| self.link(node, s))
    }

    /// Lattice direction of a link, if the network came from a grid builder.
    pub fn direction(&self, node: usize, slot: usize) -> Option<Direction> {
        assert!(slot < self.degree(node));
        self.directions[node * self.stride + slot]
    }

    /// Total number of directed links.
    pub fn link_count(&self) -> usize {
        self.degrees().sum()
    }

    /// Grid coordinates to node index.
    pub fn node_at(&self, x: usize, y: usize) -> Result<usize, KinonError> {
        let (width, height) = match &self.geometry {
            Some(g) => (g.width, g.height),
            None => (self.node_count(), 1),
        };
        if x >= width || y >= height {
            return Err(KinonError::PositionOutOfRange { x, y, width, height });
        }
        Ok(y * width + x)
    }

    /// Global buffer index of the reciprocal slot of `(node, slot)`.
    #[inline]
    pub(crate) fn reciprocal_index(&self, at: usize) -> usize {
        self.targets[at] as usize * self.stride + self.reciprocal_slots[at] as usize
    }

    /// Fingerprint used to reject state pairs taken from different networks.
    pub fn same_shape(&self, other: &Network) -> bool {
        self.stride == other.stride && self.degree == other.degree && self.targets == other.targets
    }
}

/// A structural defect found by [`validate_balanced`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkViolation {
    /// The link points at a node or slot that does not exist.
    Dangling { node: usize, slot: usize },
    /// The target slot exists but does not point back.
    NotReciprocal { node: usize, slot: usize, target: usize, target_slot: usize },
    /// In-degree and out-degree differ.
    Unbalanced { node: usize, in_degree: usize, out_degree: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BalanceReport {
    pub violations: Vec<LinkViolation>,
}

impl BalanceReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks balance (`in-degree == out-degree`) and link reciprocity.
pub fn validate_balanced(network: &Network) -> BalanceReport {
    let n = network.node_count();
    let mut violations = Vec::new();
    let mut in_degree = vec![0usize; n];
    for node in 0..n {
        for slot in 0..network.degree(node) {
            let at = node * network.stride + slot;
            let target = network.targets[at] as usize;
            let target_slot = network.reciprocal_slots[at] as usize;
            if target >= n || target_slot >= network.degree(target) {
                violations.push(LinkViolation::Dangling { node, slot });
                continue;
            }
            in_degree[target] += 1;
            let back = network.link(target, target_slot);
            if back.target != node || back.reciprocal_slot != slot {
                violations.push(LinkViolation::NotReciprocal {
                    node,
                    slot,
                    target,
                    target_slot,
                });
            }
        }
    }
    for (node, &in_deg) in in_degree.iter().enumerate() {
        let out_deg = network.degree(node);
        if in_deg != out_deg {
            violations.push(LinkViolation::Unbalanced {
                node,
                in_degree: in_deg,
                out_degree: out_deg,
            });
        }
    }
    BalanceReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> Vec<Vec<Link>> {
        vec![
            vec![Link { target: 1, reciprocal_slot: 0 }],
            vec![Link { target: 0, reciprocal_slot: 0 }],
        ]
    }

    #[test]
    fn hand_built_pair_is_valid() {
        let net = Network::from_adjacency(&pair()).unwrap();
        assert!(validate_balanced(&net).is_valid());
    }

    #[test]
    fn dangling_link_is_reported() {
        let mut adj = pair();
        adj[1].push(Link { target: 7, reciprocal_slot: 0 });
        let report = validate_balanced(&Network::from_adjacency(&adj).unwrap());
        assert!(report.violations.contains(&LinkViolation::Dangling { node: 1, slot: 1 }));
    }

    #[test]
    fn one_way_link_is_reported() {
        // 0 -> 1 and 1 -> 0 plus an extra 0 -> 1 pointing at the same slot.
        let mut adj = pair();
        adj[0].push(Link { target: 1, reciprocal_slot: 0 });
        let report = validate_balanced(&Network::from_adjacency(&adj).unwrap());
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, LinkViolation::NotReciprocal { node: 0, slot: 1, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, LinkViolation::Unbalanced { node: 0, in_degree: 1, out_degree: 2 })));
    }

    #[test]
    fn oversized_degree_rejected() {
        let adj = vec![vec![Link { target: 0, reciprocal_slot: 0 }; 9]];
        assert!(matches!(
            Network::from_adjacency(&adj),
            Err(KinonError::DegreeTooLarge { .. })
        ));
    }
}
