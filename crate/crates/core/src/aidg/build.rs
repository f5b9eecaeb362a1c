use std::collections::HashMap;

use thiserror::Error;

use super::{plain_node, Aidg, Block, NodeId, NodeKind, NONE, WRITE_BACK};
use crate::expr::{Layered, NUM_WORDS, START_ADDRESS};
use crate::model::{ArchitectureModel, Instruction, ObjectId, ResolvedInstruction, RouteError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("instruction {index}: {source}")]
    Route { index: u32, source: RouteError },
    #[error("build state expects instruction {expected}, graph holds {found}")]
    StateMismatch { expected: u32, found: u32 },
    #[error("latency of `{object}` for block at instruction {index}: {source}")]
    BlockLatency { object: String, index: u32, source: crate::expr::EvalError },
    #[error("graph exceeds {0} instructions")]
    TooLarge(u32),
}

/// Everything needed to continue a build where it stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildState {
    last_user: Vec<NodeId>,
    last_register: Vec<NodeId>,
    last_address: HashMap<(ObjectId, u64), NodeId>,
    last_fetch: NodeId,
    next_instr: u32,
    open_block: Option<Block>,
}

impl BuildState {
    pub fn fresh(m: &ArchitectureModel) -> Self {
        BuildState {
            last_user: vec![NONE; m.objects().len()],
            last_register: vec![NONE; m.register_count()],
            last_address: HashMap::new(),
            last_fetch: NONE,
            next_instr: 0,
            open_block: None,
        }
    }

    pub fn next_instruction(&self) -> u32 {
        self.next_instr
    }

    pub fn last_structure_user(&self, object: ObjectId) -> Option<NodeId> {
        Some(self.last_user[object as usize]).filter(|&n| n != NONE)
    }

    pub fn last_register_accessor(&self, reg: crate::model::RegId) -> Option<NodeId> {
        Some(self.last_register[reg as usize]).filter(|&n| n != NONE)
    }

    pub fn last_address_accessor(&self, memory: ObjectId, address: u64) -> Option<NodeId> {
        self.last_address.get(&(memory, address)).copied()
    }

    /// Whether the last fetch block is still waiting for instructions.
    pub fn has_open_block(&self) -> bool {
        self.open_block.is_some()
    }
}

/// Incremental graph construction.
pub struct AidgBuilder<'m> {
    model: &'m ArchitectureModel,
    graph: Aidg,
    state: BuildState,
    imau: ObjectId,
    imem: ObjectId,
    fetch: ObjectId,
    visits: u64,
    scratch: Vec<NodeId>,
}

impl<'m> AidgBuilder<'m> {
    pub fn new(model: &'m ArchitectureModel) -> Result<Self, BuildError> {
        let graph = Aidg::new(model.instruction_port_width().max(1));
        Self::resume(model, graph, BuildState::fresh(model))
    }

    /// Continue building on a graph with its carried state.
    pub fn resume(model: &'m ArchitectureModel, graph: Aidg, state: BuildState) -> Result<Self, BuildError> {
        if state.next_instr != graph.instruction_count() {
            return Err(BuildError::StateMismatch {
                expected: state.next_instr,
                found: graph.instruction_count(),
            });
        }
        let imau = model.imau().ok_or(BuildError::Route {
            index: state.next_instr,
            source: RouteError::InvalidModel("exactly one instruction memory access unit required".into()),
        })?;
        Ok(AidgBuilder {
            model,
            graph,
            state,
            imau,
            imem: model.instruction_memory(),
            fetch: model.fetch_stage(),
            visits: 0,
            scratch: Vec::new(),
        })
    }

    pub fn graph(&self) -> &Aidg {
        &self.graph
    }

    pub fn state(&self) -> &BuildState {
        &self.state
    }

    pub fn into_parts(self) -> (Aidg, BuildState) {
        (self.graph, self.state)
    }

    /// Number of (instruction, object) pairs visited so far by this builder.
    pub fn visits(&self) -> u64 {
        self.visits
    }

    pub fn push(&mut self, i: &Instruction) -> Result<(), BuildError> {
        let index = self.state.next_instr;
        let r = ResolvedInstruction::resolve(self.model, i)
            .map_err(|source| BuildError::Route { index, source })?;
        self.push_resolved(&r, 0)
    }

    pub fn extend<'a>(&mut self, instrs: impl IntoIterator<Item = &'a Instruction>) -> Result<(), BuildError> {
        for i in instrs {
            self.push(i)?;
        }
        Ok(())
    }

    fn block_latency(&self, object: ObjectId, first: u32, span: u32) -> Result<u64, BuildError> {
        let o = self.model.object(object);
        let expr = match o {
            crate::model::HardwareObject::Memory { read_latency, .. } => read_latency,
            other => other.latency().expect("access units have latencies"),
        };
        let tx = [(NUM_WORDS, i64::from(span)), (START_ADDRESS, i64::from(first))];
        expr.eval(&Layered(&tx, &[] as &[(&str, i64)])).map_err(|source| BuildError::BlockLatency {
            object: o.name().to_string(),
            index: first,
            source,
        })
    }

    fn structural(&mut self, object: ObjectId, node: NodeId) -> NodeId {
        std::mem::replace(&mut self.state.last_user[object as usize], node)
    }

    /// Append one resolved instruction, shifting strided addresses to the
    /// given iteration.
    pub fn push_resolved(&mut self, r: &ResolvedInstruction, iteration: u64) -> Result<(), BuildError> {
        let i = self.state.next_instr;
        if i == u32::MAX {
            return Err(BuildError::TooLarge(u32::MAX));
        }
        let p = self.graph.port_width;

        // Fetch block nodes, merged over `p` consecutive instructions.
        let block = if i.is_multiple_of(p) {
            let access = self.graph.nodes.len() as NodeId;
            let mut a = plain_node(self.imau, i, self.block_latency(self.imau, i, 1)?);
            a.kind = NodeKind::MergedAccess;
            a.struct_in = self.structural(self.imau, access);
            a.fwd_out = access + 1;
            self.graph.push_node(a, &[]);
            let mut mnode = plain_node(self.imem, i, self.block_latency(self.imem, i, 1)?);
            mnode.kind = NodeKind::MergedMemory;
            mnode.fwd_in = access;
            mnode.struct_in = self.structural(self.imem, access + 1);
            self.graph.push_node(mnode, &[]);
            self.visits += 2;
            let b = Block { access, memory: access + 1 };
            self.graph.push_block(b);
            b
        } else {
            let b = self.state.open_block.expect("open block exists mid-block");
            let span = i - self.graph.node(b.access).instr + 1;
            let first = self.graph.node(b.access).instr;
            let la = self.block_latency(self.imau, first, span)?;
            let lm = self.block_latency(self.imem, first, span)?;
            let a = self.graph.node_mut(b.access);
            a.span = span;
            a.latency = la;
            let mnode = self.graph.node_mut(b.memory);
            mnode.span = span;
            mnode.latency = lm;
            b
        };
        self.state.open_block = if (i + 1).is_multiple_of(p) { None } else { Some(block) };

        // Fetch stage: buffer edge chain plus structural edge.
        let fetch_id = self.graph.nodes.len() as NodeId;
        let mut f = plain_node(self.fetch, i, r.fetch_latency);
        f.fwd_in = block.memory;
        f.struct_in = self.structural(self.fetch, fetch_id);
        f.buf_in = std::mem::replace(&mut self.state.last_fetch, fetch_id);
        self.graph.push_node(f, &[]);
        self.graph.push_fetch(fetch_id);
        self.visits += 1;
        let mut prev = fetch_id;

        let link = |g: &mut Aidg, prev: NodeId, next: NodeId| {
            g.node_mut(prev).fwd_out = next;
        };

        for (k, hop) in r.route.hops.iter().enumerate() {
            use crate::model::Hop;
            let id = self.graph.nodes.len() as NodeId;
            match *hop {
                Hop::InstrAccess(_) | Hop::InstrMemory(_) | Hop::Fetch(_) => continue,
                Hop::Stage(s) => {
                    let mut n = plain_node(s, i, r.stage_latencies[k - 3]);
                    n.fwd_in = prev;
                    n.struct_in = self.structural(s, id);
                    self.graph.push_node(n, &[]);
                }
                Hop::Unit(u) => {
                    let mut n = plain_node(u, i, r.unit_latency);
                    n.fwd_in = prev;
                    n.struct_in = self.structural(u, id);
                    if let Some(stage) = self.model.stage_of(u) {
                        for &sib in self.model.units_of(stage) {
                            self.state.last_user[sib as usize] = id;
                        }
                    }
                    self.scratch.clear();
                    for &reg in &r.registers {
                        let last = std::mem::replace(&mut self.state.last_register[reg as usize], id);
                        if last != NONE {
                            self.scratch.push(last);
                        }
                    }
                    self.scratch.sort_unstable();
                    self.scratch.dedup();
                    self.graph.push_node(n, &self.scratch);
                }
                Hop::Memory(mid) => {
                    let mh = r.memories.iter().find(|h| h.memory == mid).expect("memory hop resolved");
                    let shift = |a: &crate::model::Access| {
                        a.address + iteration * a.stride
                    };
                    let latency = if mh.address_dependent {
                        crate::model::memory_latency(
                            self.model,
                            mid,
                            mh.reads.iter().map(|a| (shift(a), a.words)),
                            mh.writes.iter().map(|a| (shift(a), a.words)),
                            &r.immediates,
                        )
                        .map_err(|source| BuildError::Route { index: i, source })?
                    } else {
                        mh.latency
                    };
                    let mut n = plain_node(mid, i, latency);
                    n.fwd_in = prev;
                    n.struct_in = self.structural(mid, id);
                    self.scratch.clear();
                    for a in mh.reads.iter().chain(&mh.writes) {
                        let base = shift(a);
                        for w in 0..u64::from(a.words) {
                            match self.state.last_address.insert((mid, base + w), id) {
                                Some(last) if last != id => self.scratch.push(last),
                                _ => {}
                            }
                        }
                    }
                    self.scratch.sort_unstable();
                    self.scratch.dedup();
                    self.graph.push_node(n, &self.scratch);
                }
                Hop::WriteBack => {
                    let mut n = plain_node(WRITE_BACK, i, 0);
                    n.fwd_in = prev;
                    self.graph.push_node(n, &[]);
                    for &reg in &r.write_registers {
                        self.state.last_register[reg as usize] = id;
                    }
                }
            }
            link(&mut self.graph, prev, id);
            prev = id;
            self.visits += 1;
        }
        self.state.next_instr += 1;
        Ok(())
    }
}

/// Build the graph of a complete instruction stream.
pub fn build_aidg(m: &ArchitectureModel, instrs: &[Instruction]) -> Result<Aidg, BuildError> {
    let mut b = AidgBuilder::new(m)?;
    b.extend(instrs)?;
    Ok(b.into_parts().0)
}
