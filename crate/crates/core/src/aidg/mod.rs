//! Architectural instruction dependency graphs.
//!
//! A node states that an instruction occupies a hardware object. Edges are
//! forward (the instruction moves on), structural (the object is busy with an
//! earlier instruction), data (a register or memory word was last touched by
//! another node) and buffer (issue-buffer chain between fetch nodes).
//!
//! Node ids are assigned in construction order and every edge points from a
//! lower to a higher id, so construction order is already topological.

mod build;
mod dot;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::model::ObjectId;

pub use build::{build_aidg, AidgBuilder, BuildError, BuildState};
pub use dot::{export_dot, export_json};

/// Sentinel for absent node references.
pub const NONE: u32 = u32::MAX;
/// Object id of the synthetic write-back terminus of loads.
pub const WRITE_BACK: ObjectId = u32::MAX;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Plain,
    /// Instruction memory access unit node shared by one fetch block.
    MergedAccess,
    /// Instruction memory node shared by one fetch block; forwards each
    /// instruction of the block separately.
    MergedMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EdgeKind {
    #[serde(rename = "f")]
    Forward,
    #[serde(rename = "s")]
    Structural,
    #[serde(rename = "d")]
    Data,
    #[serde(rename = "b")]
    Buffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub object: ObjectId,
    /// Instruction index, or the first instruction of a merged block.
    pub instr: u32,
    /// Number of instructions covered: 1 unless merged.
    pub span: u32,
    pub kind: NodeKind,
    pub fwd_in: NodeId,
    pub struct_in: NodeId,
    pub buf_in: NodeId,
    /// Forward successor of plain nodes and merged access nodes.
    pub fwd_out: NodeId,
    data_start: u32,
    data_len: u32,
    pub latency: u64,
}

impl Node {
    pub fn is_merged(&self) -> bool {
        self.kind != NodeKind::Plain
    }
}

/// One fetch block: the merged access and memory nodes of `port_width`
/// consecutive instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Block {
    pub access: NodeId,
    pub memory: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Aidg {
    nodes: Vec<Node>,
    data: Vec<NodeId>,
    fetch_of: Vec<NodeId>,
    blocks: Vec<Block>,
    port_width: u32,
}

impl Aidg {
    pub(crate) fn new(port_width: u32) -> Self {
        Aidg { nodes: Vec::new(), data: Vec::new(), fetch_of: Vec::new(), blocks: Vec::new(), port_width }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn data_preds(&self, id: NodeId) -> &[NodeId] {
        let n = &self.nodes[id as usize];
        &self.data[n.data_start as usize..(n.data_start + n.data_len) as usize]
    }

    pub fn instruction_count(&self) -> u32 {
        self.fetch_of.len() as u32
    }

    pub fn port_width(&self) -> u32 {
        self.port_width
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// The fetch block containing an instruction.
    pub fn block_of(&self, instr: u32) -> Block {
        self.blocks[(instr / self.port_width) as usize]
    }

    /// The fetch-stage node of an instruction.
    pub fn fetch_node(&self, instr: u32) -> NodeId {
        self.fetch_of[instr as usize]
    }

    /// Forward successors of a node.
    pub fn forward_successors(&self, id: NodeId) -> Vec<NodeId> {
        let n = &self.nodes[id as usize];
        match n.kind {
            NodeKind::MergedMemory => {
                (n.instr..n.instr + n.span).map(|i| self.fetch_of[i as usize]).collect()
            }
            _ if n.fwd_out != NONE => vec![n.fwd_out],
            _ => vec![],
        }
    }

    /// All edges, grouped by destination in id order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.nodes.iter().enumerate().flat_map(move |(i, n)| {
            let dst = i as NodeId;
            let single = [
                (n.fwd_in, EdgeKind::Forward),
                (n.struct_in, EdgeKind::Structural),
                (n.buf_in, EdgeKind::Buffer),
            ]
            .into_iter()
            .filter(|(s, _)| *s != NONE)
            .map(move |(src, kind)| Edge { src, dst, kind });
            let data = self.data_preds(dst).iter().map(move |&src| Edge { src, dst, kind: EdgeKind::Data });
            single.chain(data)
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub(crate) fn push_node(&mut self, mut node: Node, data: &[NodeId]) -> NodeId {
        node.data_start = self.data.len() as u32;
        node.data_len = data.len() as u32;
        self.data.extend_from_slice(data);
        self.nodes.push(node);
        (self.nodes.len() - 1) as NodeId
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id as usize]
    }

    pub(crate) fn push_block(&mut self, b: Block) {
        self.blocks.push(b);
    }

    pub(crate) fn push_fetch(&mut self, id: NodeId) {
        self.fetch_of.push(id);
    }
}

pub(crate) fn plain_node(object: ObjectId, instr: u32, latency: u64) -> Node {
    Node {
        object,
        instr,
        span: 1,
        kind: NodeKind::Plain,
        fwd_in: NONE,
        struct_in: NONE,
        buf_in: NONE,
        fwd_out: NONE,
        data_start: 0,
        data_len: 0,
        latency,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dependency cycle through node {0}")]
pub struct CycleError(pub NodeId);

/// Evaluation order of a graph. Graphs from the builder are already in
/// order, which is verified in one pass over the edges.
pub fn topological_order(g: &Aidg) -> Result<Vec<NodeId>, CycleError> {
    if g.edges().all(|e| e.src < e.dst) {
        return Ok((0..g.len() as NodeId).collect());
    }
    let edges: Vec<(NodeId, NodeId)> = g.edges().map(|e| (e.src, e.dst)).collect();
    topo_sort(g.len(), &edges)
}

/// Kahn's algorithm, smallest ready id first so the result is deterministic.
pub fn topo_sort(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Vec<NodeId>, CycleError> {
    let mut indeg = vec![0u32; n];
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b);
        indeg[b as usize] += 1;
    }
    let mut ready: BinaryHeap<Reverse<NodeId>> =
        (0..n as NodeId).filter(|&i| indeg[i as usize] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(x)) = ready.pop() {
        order.push(x);
        for &y in &adj[x as usize] {
            indeg[y as usize] -= 1;
            if indeg[y as usize] == 0 {
                ready.push(Reverse(y));
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap_or(0) as NodeId;
        return Err(CycleError(stuck));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chain_is_identity() {
        let edges = [(0, 1), (1, 2), (2, 3)];
        assert_eq!(topo_sort(4, &edges), Ok(vec![0, 1, 2, 3]));
    }

    #[test]
    fn cycle_detected() {
        assert!(topo_sort(3, &[(0, 1), (1, 2), (2, 1)]).is_err());
    }

    proptest! {
        #[test]
        fn random_dags_are_ordered(
            n in 1usize..40,
            raw in prop::collection::vec((0usize..40, 0usize..40), 0..120),
            perm_seed in any::<u64>(),
        ) {
            // Edges go from lower to higher rank, ids are a shuffled relabeling.
            let mut ids: Vec<NodeId> = (0..n as NodeId).collect();
            let mut s = perm_seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ids.swap(i, (s >> 33) as usize % (i + 1));
            }
            let edges: Vec<(NodeId, NodeId)> = raw
                .into_iter()
                .map(|(a, b)| (a % n, b % n))
                .filter(|(a, b)| a < b)
                .map(|(a, b)| (ids[a], ids[b]))
                .collect();
            let order = topo_sort(n, &edges).unwrap();
            let mut pos = vec![0; n];
            for (i, &x) in order.iter().enumerate() {
                pos[x as usize] = i;
            }
            for (a, b) in edges {
                prop_assert!(pos[a as usize] < pos[b as usize]);
            }
        }
    }
}
