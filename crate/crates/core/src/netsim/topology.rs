use std::collections::BTreeSet;

use super::{NetError, NodeId};

/// A circulant graph of order `N` whose edges are `(i, (i + q) mod N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CirculantTopology {
    order: usize,
    jump: usize,
}

impl CirculantTopology {
    pub fn new(order: usize, jump: usize) -> Result<Self, NetError> {
        if order == 0 || jump == 0 || jump >= order {
            return Err(NetError::InvalidJump { order, jump });
        }
        Ok(Self { order, jump })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn jump(&self) -> usize {
        self.jump
    }

    /// The node `i` forwards to in a circular shift.
    pub fn successor(&self, i: NodeId) -> NodeId {
        (i + self.jump) % self.order
    }

    pub fn predecessor(&self, i: NodeId) -> NodeId {
        (i + self.order - self.jump) % self.order
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.order).map(move |i| (i, self.successor(i)))
    }

    /// Maps every directed circulant edge onto the complete graph `K_host`.
    pub fn embed(&self, host_order: usize) -> Result<Embedding, NetError> {
        if self.order > host_order {
            return Err(NetError::OrderMismatch {
                topology: self.order,
                host: host_order,
            });
        }
        let directed: Vec<(NodeId, NodeId)> = self.edges().collect();
        let undirected = directed
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        Ok(Embedding {
            host_order,
            directed,
            undirected,
        })
    }
}

/// Result of embedding a circulant overlay into a complete graph. Node indices
/// map to themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    pub host_order: usize,
    /// One entry per circulant edge, in node order.
    pub directed: Vec<(NodeId, NodeId)>,
    /// The host edges those map onto; `(i, i + N/2)` pairs collapse.
    pub undirected: BTreeSet<(NodeId, NodeId)>,
}

impl Embedding {
    /// Every used host edge joins two distinct nodes below the host order,
    /// which is all membership in `K_N` requires.
    pub fn is_valid(&self) -> bool {
        self.undirected
            .iter()
            .all(|&(a, b)| a != b && b < self.host_order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_embeds_with_all_edges() {
        let e = CirculantTopology::new(8, 1).unwrap().embed(8).unwrap();
        assert_eq!(e.directed.len(), 8);
        assert_eq!(e.undirected.len(), 8);
        assert!(e.is_valid());
    }

    #[test]
    fn half_jump_pairs_coincide() {
        let e = CirculantTopology::new(8, 4).unwrap().embed(8).unwrap();
        assert_eq!(e.directed.len(), 8);
        assert_eq!(e.undirected.len(), 4);
        let directed: BTreeSet<_> = e.directed.iter().copied().collect();
        assert_eq!(directed.len(), 8);
    }

    #[test]
    fn larger_topology_is_rejected() {
        let err = CirculantTopology::new(9, 2).unwrap().embed(8).unwrap_err();
        assert!(matches!(
            err,
            NetError::OrderMismatch {
                topology: 9,
                host: 8
            }
        ));
    }

    #[test]
    fn jump_bounds() {
        assert!(CirculantTopology::new(8, 0).is_err());
        assert!(CirculantTopology::new(8, 8).is_err());
        assert!(CirculantTopology::new(1, 1).is_err());
        let t = CirculantTopology::new(8, 3).unwrap();
        assert_eq!(t.successor(6), 1);
        assert_eq!(t.predecessor(1), 6);
    }
}
