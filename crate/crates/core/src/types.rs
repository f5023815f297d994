use std::fmt;

/// Identifier of a node in the ad hoc network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// Undirected link between two nodes. The endpoints are stored in
/// ascending order so `Link::new(a, b) == Link::new(b, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    lo: NodeId,
    hi: NodeId,
}

impl Link {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Link { lo: a, hi: b }
        } else {
            Link { lo: b, hi: a }
        }
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (self.lo, self.hi)
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.lo == node || self.hi == node
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

/// Ordered, loop-free node sequence from a source to a destination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(Vec<NodeId>);

impl Path {
    /// Returns `None` if the sequence has fewer than two nodes or repeats a node.
    pub fn new(nodes: Vec<NodeId>) -> Option<Self> {
        if nodes.len() < 2 || has_duplicates(&nodes) {
            return None;
        }
        Some(Path(nodes))
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn source(&self) -> NodeId {
        self.0[0]
    }

    pub fn destination(&self) -> NodeId {
        self.0[self.0.len() - 1]
    }

    /// Number of links.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intermediates(&self) -> &[NodeId] {
        &self.0[1..self.0.len() - 1]
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.0.windows(2).map(|w| Link::new(w[0], w[1]))
    }

    pub fn contains_link(&self, link: Link) -> bool {
        self.links().any(|l| l == link)
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.0.iter().position(|&n| n == node)
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(">")?;
            }
            write!(f, "{}", n.0)?;
        }
        Ok(())
    }
}

pub(crate) fn has_duplicates(nodes: &[NodeId]) -> bool {
    let mut seen = std::collections::HashSet::with_capacity(nodes.len());
    nodes.iter().any(|n| !seen.insert(*n))
}
