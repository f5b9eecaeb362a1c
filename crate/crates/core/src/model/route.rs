use std::collections::BTreeMap;

use thiserror::Error;

use super::{ArchitectureModel, HardwareObject, Instruction, ObjectId, ObjectKind, RegId};
use crate::expr::{EvalError, Layered, LatencyExpr, NUM_WORDS, START_ADDRESS};

/// One step of an instruction's path through the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hop {
    InstrAccess(ObjectId),
    InstrMemory(ObjectId),
    Fetch(ObjectId),
    Stage(ObjectId),
    Unit(ObjectId),
    Memory(ObjectId),
    WriteBack,
}

impl Hop {
    pub fn object(self) -> ObjectId {
        match self {
            Hop::InstrAccess(o)
            | Hop::InstrMemory(o)
            | Hop::Fetch(o)
            | Hop::Stage(o)
            | Hop::Unit(o)
            | Hop::Memory(o) => o,
            Hop::WriteBack => crate::aidg::WRITE_BACK,
        }
    }
}

/// Ordered objects an instruction occupies.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    pub hops: Vec<Hop>,
}

impl Route {
    pub fn names<'m>(&self, m: &'m ArchitectureModel) -> Vec<&'m str> {
        self.hops.iter().map(|h| m.object_name(h.object())).collect()
    }

    pub fn unit(&self) -> ObjectId {
        self.hops
            .iter()
            .find_map(|h| match h {
                Hop::Unit(u) => Some(*u),
                _ => None,
            })
            .expect("every route has a unit")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("model is not routable: {0}")]
    InvalidModel(String),
    #[error("no functional unit supports `{0}`")]
    NoSupportingUnit(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("no unit processing `{operation}` may access register `{register}`")]
    RegisterAccess { operation: String, register: String },
    #[error("unknown memory `{0}`")]
    UnknownMemory(String),
    #[error("no unit processing `{operation}` may access memory `{memory}`")]
    MemoryAccess { operation: String, memory: String },
    #[error("no unit processing `{operation}` is reachable from the fetch stage")]
    Unreachable { operation: String },
    #[error("transaction of {words} words exceeds port width {port_width} of `{memory}`")]
    TransactionTooWide { memory: String, words: u64, port_width: u32 },
    #[error("latency of `{object}`: {source}")]
    Latency { object: String, source: EvalError },
}

/// Memory transaction part of a resolved instruction. Addresses carry a
/// per-iteration stride, zero for plain instruction streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryHop {
    pub memory: ObjectId,
    pub reads: Vec<Access>,
    pub writes: Vec<Access>,
    /// Latency at iteration 0.
    pub latency: u64,
    /// Whether the latency must be recomputed when addresses move.
    pub address_dependent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub address: u64,
    pub words: u32,
    pub stride: u64,
}

/// An instruction with its route chosen and its latencies bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedInstruction {
    pub route: Route,
    pub unit: ObjectId,
    pub fetch_latency: u64,
    /// Latencies of pass-through stages between fetch and the unit.
    pub stage_latencies: Vec<u64>,
    pub unit_latency: u64,
    /// Read and write registers, deduplicated and sorted.
    pub registers: Vec<RegId>,
    pub write_registers: Vec<RegId>,
    pub memories: Vec<MemoryHop>,
    pub immediates: BTreeMap<String, i64>,
}

impl ResolvedInstruction {
    pub fn reads_memory(&self) -> bool {
        self.memories.iter().any(|m| !m.reads.is_empty())
    }
}

/// The ordered object list of an instruction.
pub fn route_instruction(m: &ArchitectureModel, i: &Instruction) -> Result<Route, RouteError> {
    Ok(ResolvedInstruction::resolve(m, i)?.route)
}

fn object_latency(
    m: &ArchitectureModel,
    id: ObjectId,
    imm: &BTreeMap<String, i64>,
) -> Result<u64, RouteError> {
    let o = m.object(id);
    let lat = o.latency().expect("stages and units have latencies");
    lat.eval(imm).map_err(|source| RouteError::Latency { object: o.name().to_string(), source })
}

/// Latency of one memory node: read and write parts are added.
pub(crate) fn memory_latency(
    m: &ArchitectureModel,
    memory: ObjectId,
    reads: impl Iterator<Item = (u64, u32)> + Clone,
    writes: impl Iterator<Item = (u64, u32)> + Clone,
    imm: &BTreeMap<String, i64>,
) -> Result<u64, RouteError> {
    let HardwareObject::Memory { name, read_latency, write_latency, .. } = m.object(memory) else {
        unreachable!("memory hops point at memories")
    };
    let part = |expr: &LatencyExpr, acc: &mut dyn Iterator<Item = (u64, u32)>| {
        let mut words = 0i64;
        let mut start = i64::MAX;
        let mut any = false;
        for (a, w) in acc {
            any = true;
            words += i64::from(w);
            start = start.min(i64::try_from(a).unwrap_or(i64::MAX));
        }
        if !any {
            return Ok(0);
        }
        let tx = [(NUM_WORDS, words), (START_ADDRESS, start)];
        expr.eval(&Layered(imm, &tx))
            .map_err(|source| RouteError::Latency { object: name.clone(), source })
    };
    let r = part(read_latency, &mut reads.clone())?;
    let w = part(write_latency, &mut writes.clone())?;
    r.checked_add(w).ok_or(RouteError::Latency { object: name.clone(), source: EvalError::Overflow })
}

impl ResolvedInstruction {
    pub fn resolve(m: &ArchitectureModel, i: &Instruction) -> Result<Self, RouteError> {
        Self::resolve_with_strides(m, i, &|_, _| 0)
    }

    /// Resolve with a stride lookup for each address (memory name, address).
    pub fn resolve_with_strides(
        m: &ArchitectureModel,
        i: &Instruction,
        stride: &dyn Fn(&str, u64) -> u64,
    ) -> Result<Self, RouteError> {
        let imau = m.imau().ok_or_else(|| {
            RouteError::InvalidModel("exactly one instruction memory access unit required".into())
        })?;
        if m.object(m.fetch_stage()).kind() != ObjectKind::InstructionFetchStage {
            return Err(RouteError::InvalidModel("fetch_stage is not a fetch stage".into()));
        }

        let lookup_regs = |names: &[String]| -> Result<Vec<RegId>, RouteError> {
            names
                .iter()
                .map(|r| m.register(r).ok_or_else(|| RouteError::UnknownRegister(r.clone())))
                .collect()
        };
        let reads = lookup_regs(&i.read_registers)?;
        let writes = lookup_regs(&i.write_registers)?;

        // Memories touched, in order of first appearance.
        let mut mems: Vec<(ObjectId, Vec<Access>, Vec<Access>)> = Vec::new();
        for (is_write, acc) in i
            .read_addresses
            .iter()
            .map(|a| (false, a))
            .chain(i.write_addresses.iter().map(|a| (true, a)))
        {
            let mid = m
                .id(&acc.memory)
                .filter(|&id| m.object(id).kind() == ObjectKind::Memory)
                .ok_or_else(|| RouteError::UnknownMemory(acc.memory.clone()))?;
            let a = Access { address: acc.address, words: acc.words, stride: stride(&acc.memory, acc.address) };
            let pos = match mems.iter().position(|(x, _, _)| *x == mid) {
                Some(p) => p,
                None => {
                    mems.push((mid, Vec::new(), Vec::new()));
                    mems.len() - 1
                }
            };
            if is_write {
                mems[pos].2.push(a);
            } else {
                mems[pos].1.push(a);
            }
        }
        for (mid, r, w) in &mems {
            let HardwareObject::Memory { name, port_width, .. } = m.object(*mid) else { unreachable!() };
            for part in [r, w] {
                let words: u64 = part.iter().map(|a| u64::from(a.words)).sum();
                if words > u64::from(*port_width) {
                    return Err(RouteError::TransactionTooWide {
                        memory: name.clone(),
                        words,
                        port_width: *port_width,
                    });
                }
            }
        }

        let mut first_failure: Option<RouteError> = None;
        let mut chosen = None;
        for (idx, o) in m.objects().iter().enumerate() {
            let u = idx as ObjectId;
            if !o.kind().is_unit() || !o.to_process().contains(&i.operation) {
                continue;
            }
            let failure = if let Some(r) =
                reads.iter().find(|&&r| !m.can_read(u, m.register_file_of(r)))
            {
                Some(RouteError::RegisterAccess {
                    operation: i.operation.clone(),
                    register: m.register_name(*r).to_string(),
                })
            } else if let Some(r) = writes.iter().find(|&&r| !m.can_write(u, m.register_file_of(r))) {
                Some(RouteError::RegisterAccess {
                    operation: i.operation.clone(),
                    register: m.register_name(*r).to_string(),
                })
            } else if let Some((mid, _, _)) = mems.iter().find(|(mid, r, w)| {
                (!r.is_empty() && !m.can_read(u, *mid)) || (!w.is_empty() && !m.can_write(u, *mid))
            }) {
                Some(RouteError::MemoryAccess {
                    operation: i.operation.clone(),
                    memory: m.object(*mid).name().to_string(),
                })
            } else if m.stage_of(u).and_then(|s| m.path_from_fetch(s)).is_none() {
                Some(RouteError::Unreachable { operation: i.operation.clone() })
            } else {
                None
            };
            match failure {
                None => {
                    chosen = Some(u);
                    break;
                }
                Some(f) => {
                    first_failure.get_or_insert(f);
                }
            }
        }
        let unit = match chosen {
            Some(u) => u,
            None => {
                return Err(first_failure
                    .unwrap_or_else(|| RouteError::NoSupportingUnit(i.operation.clone())))
            }
        };
        let stage = m.stage_of(unit).expect("checked above");
        let path = m.path_from_fetch(stage).expect("checked above");

        let imm = &i.immediates;
        let mut hops = vec![
            Hop::InstrAccess(imau),
            Hop::InstrMemory(m.instruction_memory()),
            Hop::Fetch(m.fetch_stage()),
        ];
        let mut stage_latencies = Vec::new();
        for &s in &path[..path.len() - 1] {
            hops.push(Hop::Stage(s));
            stage_latencies.push(object_latency(m, s, imm)?);
        }
        hops.push(Hop::Unit(unit));
        let mut memories = Vec::new();
        for (mid, r, w) in mems {
            hops.push(Hop::Memory(mid));
            let HardwareObject::Memory { read_latency, write_latency, .. } = m.object(mid) else {
                unreachable!()
            };
            let strided = r.iter().chain(&w).any(|a| a.stride != 0);
            let address_dependent = strided
                && (read_latency.free_variables().iter().any(|v| v == START_ADDRESS)
                    || write_latency.free_variables().iter().any(|v| v == START_ADDRESS));
            let latency = memory_latency(
                m,
                mid,
                r.iter().map(|a| (a.address, a.words)),
                w.iter().map(|a| (a.address, a.words)),
                imm,
            )?;
            memories.push(MemoryHop { memory: mid, reads: r, writes: w, latency, address_dependent });
        }
        let loads = memories.iter().any(|h| !h.reads.is_empty());
        if loads {
            hops.push(Hop::WriteBack);
        }

        let mut registers: Vec<RegId> = reads.iter().chain(&writes).copied().collect();
        registers.sort_unstable();
        registers.dedup();
        let mut write_registers = writes;
        write_registers.sort_unstable();
        write_registers.dedup();

        Ok(ResolvedInstruction {
            route: Route { hops },
            unit,
            fetch_latency: object_latency(m, m.fetch_stage(), imm)?,
            stage_latencies,
            unit_latency: object_latency(m, unit, imm)?,
            registers,
            write_registers,
            memories,
            immediates: imm.clone(),
        })
    }
}
