//! Brute-force cycle-stepping simulator used as a test oracle.
//!
//! It advances a global clock one cycle at a time. Every hardware object
//! serves its instructions in program order and holds an instruction until it
//! has moved on. Within a cycle the rules are applied repeatedly until nothing
//! changes, so an object vacated in a cycle can be re-occupied in the same
//! cycle. Fetch blocks of `port_width` instructions pass the instruction
//! memory access unit and the instruction memory as a group; the memory hands
//! out at most `issue_buffer_size` instructions per cycle, and at most that
//! many instructions are admitted to the fetch stage per cycle.
//!
//! It shares nothing with the graph evaluator beyond routing.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::{Layered, NUM_WORDS, START_ADDRESS};
use crate::model::{ArchitectureModel, HardwareObject, Hop, Instruction, ObjectId, ResolvedInstruction, RouteError};

pub const DEFAULT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("instruction {index}: {source}")]
    Route { index: usize, source: RouteError },
    #[error("stream of {len} instructions exceeds the cap of {cap}")]
    TooLong { len: usize, cap: usize },
    #[error("fetch block latency of `{0}` does not evaluate")]
    Latency(String),
    #[error("no progress after cycle {0}")]
    Stuck(u64),
}

/// One occupancy interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupancy {
    pub instr: u32,
    /// `crate::aidg::WRITE_BACK` for the write-back terminus.
    pub object: ObjectId,
    pub enter: u64,
    pub leave: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    /// Fetch blocks, then each instruction's hops, in the order they are
    /// first occupied: block hops appear before the first instruction of the
    /// block.
    pub occupancy: Vec<Occupancy>,
    pub total: u64,
    /// Cycles at which the clock stopped to apply rules.
    pub cycles_visited: u64,
}

impl SimTrace {
    pub fn to_csv(&self, m: &ArchitectureModel) -> String {
        let mut out = String::from("instruction,object,enter,leave\n");
        for o in &self.occupancy {
            let _ = writeln!(out, "{},{},{},{}", o.instr, m.object_name(o.object), o.enter, o.leave);
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Resource {
    Object(ObjectId),
    /// All units of one execute stage share one slot.
    Units(ObjectId),
}

#[derive(Clone, Copy, Default)]
struct Times {
    enter: Option<u64>,
    stop: Option<u64>,
    leave: Option<u64>,
}

struct Step {
    object: ObjectId,
    latency: u64,
    resource: Option<Resource>,
    /// Previous program-order user of `resource`.
    before: Option<(usize, usize)>,
    deps: Vec<(usize, usize)>,
    t: Times,
}

struct Block {
    first: usize,
    end: usize,
    access_latency: u64,
    memory_latency: u64,
    access: Times,
    memory: Times,
}

fn block_latency(m: &ArchitectureModel, id: ObjectId, first: usize, span: usize) -> Result<u64, SimError> {
    let o = m.object(id);
    let e = match o {
        HardwareObject::Memory { read_latency, .. } => read_latency,
        other => other.latency().ok_or_else(|| SimError::Latency(o.name().into()))?,
    };
    let bind = [(NUM_WORDS, span as i64), (START_ADDRESS, first as i64)];
    e.eval(&Layered(&bind, &[] as &[(&str, i64)])).map_err(|_| SimError::Latency(o.name().into()))
}

pub fn simulate(m: &ArchitectureModel, instrs: &[Instruction]) -> Result<SimTrace, SimError> {
    simulate_capped(m, instrs, DEFAULT_CAP)
}

pub fn simulate_capped(m: &ArchitectureModel, instrs: &[Instruction], cap: usize) -> Result<SimTrace, SimError> {
    if instrs.len() > cap {
        return Err(SimError::TooLong { len: instrs.len(), cap });
    }
    let resolved: Vec<ResolvedInstruction> = instrs
        .iter()
        .enumerate()
        .map(|(index, i)| ResolvedInstruction::resolve(m, i).map_err(|source| SimError::Route { index, source }))
        .collect::<Result<_, _>>()?;
    let n = resolved.len();
    let p = m.instruction_port_width().max(1) as usize;
    let cap_per_cycle = m.issue_buffer_size().max(1);
    let imau = m.imau().ok_or_else(|| SimError::Latency("instruction memory access unit".into()))?;
    let imem = m.instruction_memory();

    let mut blocks = Vec::new();
    for first in (0..n).step_by(p) {
        let end = (first + p).min(n);
        blocks.push(Block {
            first,
            end,
            access_latency: block_latency(m, imau, first, end - first)?,
            memory_latency: block_latency(m, imem, first, end - first)?,
            access: Times::default(),
            memory: Times::default(),
        });
    }

    // Per instruction: fetch, stages, unit, memories, write-back.
    let mut steps: Vec<Vec<Step>> = Vec::with_capacity(n);
    let mut last_user: HashMap<Resource, (usize, usize)> = HashMap::new();
    let mut last_reg: HashMap<u32, (usize, usize)> = HashMap::new();
    let mut last_word: HashMap<(ObjectId, u64), (usize, usize)> = HashMap::new();
    for (i, r) in resolved.iter().enumerate() {
        let mut list = Vec::new();
        let mut stage_idx = 0;
        for hop in &r.route.hops {
            let s = list.len();
            let (object, latency, resource, mut deps) = match *hop {
                Hop::InstrAccess(_) | Hop::InstrMemory(_) => continue,
                Hop::Fetch(f) => (f, r.fetch_latency, None, Vec::new()),
                Hop::Stage(st) => {
                    stage_idx += 1;
                    (st, r.stage_latencies[stage_idx - 1], Some(Resource::Object(st)), Vec::new())
                }
                Hop::Unit(u) => {
                    let res = m.stage_of(u).map_or(Resource::Object(u), Resource::Units);
                    let deps: Vec<_> = r.registers.iter().filter_map(|reg| last_reg.insert(*reg, (i, s))).collect();
                    (u, r.unit_latency, Some(res), deps)
                }
                Hop::Memory(mid) => {
                    let mh = r.memories.iter().find(|h| h.memory == mid).expect("resolved memory");
                    let mut deps = Vec::new();
                    for a in mh.reads.iter().chain(&mh.writes) {
                        for w in 0..u64::from(a.words) {
                            if let Some(prev) = last_word.insert((mid, a.address + w), (i, s)) {
                                if prev != (i, s) {
                                    deps.push(prev);
                                }
                            }
                        }
                    }
                    (mid, mh.latency, Some(Resource::Object(mid)), deps)
                }
                Hop::WriteBack => {
                    for reg in &r.write_registers {
                        last_reg.insert(*reg, (i, s));
                    }
                    (crate::aidg::WRITE_BACK, 0, None, Vec::new())
                }
            };
            deps.sort_unstable();
            deps.dedup();
            let before = resource.and_then(|res| last_user.insert(res, (i, s)));
            list.push(Step { object, latency, resource, before, deps, t: Times::default() });
        }
        steps.push(list);
    }

    let mut release: Vec<Option<u64>> = vec![None; n];
    let mut admitted = 0usize;
    let mut dispatched = 0usize;
    let mut t: u64 = 0;
    let mut visited = 0;
    let mut done_count = 0usize;
    let total_steps: usize = steps.iter().map(Vec::len).sum::<usize>() + 2 * blocks.len();
    let leave_of = |steps: &Vec<Vec<Step>>, (i, s): (usize, usize)| steps[i][s].t.leave;

    while done_count < total_steps {
        visited += 1;
        let mut forwarded = 0u32;
        let mut fetched = 0u32;
        let mut changed_this_cycle = false;
        loop {
            let mut changed = false;
            for b in 0..blocks.len() {
                let prev_access = if b == 0 { Some(0) } else { blocks[b - 1].access.leave };
                let prev_memory = if b == 0 { Some(0) } else { blocks[b - 1].memory.leave };
                let blk = &mut blocks[b];
                if blk.access.enter.is_none() && prev_access.is_some_and(|l| l <= t) {
                    blk.access.enter = Some(t);
                    blk.access.stop = Some(t + blk.access_latency);
                    changed = true;
                }
                if blk.access.leave.is_none()
                    && blk.access.stop.is_some_and(|s| s <= t)
                    && prev_memory.is_some_and(|l| l <= t)
                {
                    blk.access.leave = Some(t);
                    done_count += 1;
                    changed = true;
                }
                if blk.memory.enter.is_none()
                    && blk.access.leave.is_some_and(|l| l <= t)
                    && prev_memory.is_some_and(|l| l <= t)
                {
                    blk.memory.enter = Some(t);
                    blk.memory.stop = Some(t + blk.memory_latency);
                    changed = true;
                }
            }
            // Instruction memory hands out instructions in order.
            while dispatched < n && forwarded < cap_per_cycle {
                let b = dispatched / p;
                if !blocks[b].memory.stop.is_some_and(|s| s <= t) {
                    break;
                }
                release[dispatched] = Some(t);
                dispatched += 1;
                forwarded += 1;
                changed = true;
                if dispatched == blocks[b].end {
                    blocks[b].memory.leave = Some(t);
                    done_count += 1;
                }
            }
            // Fetch admission in order; the very first instruction is free.
            while admitted < dispatched && release[admitted].is_some_and(|r| r <= t) {
                if admitted > 0 {
                    if fetched >= cap_per_cycle {
                        break;
                    }
                    fetched += 1;
                }
                let f = &mut steps[admitted][0];
                f.t.enter = Some(t);
                changed = true;
                admitted += 1;
            }
            for i in 0..admitted {
                for s in 0..steps[i].len() {
                    let st = &steps[i][s];
                    if st.t.leave.is_some() {
                        continue;
                    }
                    let mut t_new = st.t;
                    if t_new.enter.is_none() {
                        let arrived = leave_of(&steps, (i, s - 1)).is_some_and(|l| l <= t);
                        let free = st.before.is_none_or(|b| leave_of(&steps, b).is_some_and(|l| l <= t));
                        if !(arrived && free) {
                            break;
                        }
                        t_new.enter = Some(t);
                    }
                    if t_new.stop.is_none() {
                        let ready = st.deps.iter().all(|&d| leave_of(&steps, d).is_some_and(|l| l <= t));
                        if ready {
                            t_new.stop = Some(t + st.latency);
                        }
                    }
                    if t_new.stop.is_some_and(|s| s <= t) {
                        let next_free = match steps[i].get(s + 1) {
                            Some(next) if next.resource.is_some() => {
                                next.before.is_none_or(|b| leave_of(&steps, b).is_some_and(|l| l <= t))
                            }
                            _ => true,
                        };
                        if next_free {
                            t_new.leave = Some(t);
                        }
                    }
                    let st = &mut steps[i][s];
                    if t_new.enter != st.t.enter || t_new.stop != st.t.stop || t_new.leave != st.t.leave {
                        if t_new.leave.is_some() {
                            done_count += 1;
                        }
                        st.t = t_new;
                        changed = true;
                    }
                    if st.t.leave.is_none() {
                        break;
                    }
                }
            }
            if !changed {
                break;
            }
            changed_this_cycle = true;
        }
        if done_count >= total_steps {
            break;
        }
        // Jump over cycles in which no rule can fire.
        t = if changed_this_cycle {
            t + 1
        } else {
            let pending = blocks
                .iter()
                .flat_map(|b| [b.access.stop, b.memory.stop])
                .chain(steps.iter().flatten().map(|s| s.t.stop))
                .flatten()
                .filter(|&s| s > t)
                .min();
            pending.ok_or(SimError::Stuck(t))?
        };
    }

    let mut occupancy = Vec::new();
    let mut total = 0;
    for (i, list) in steps.iter().enumerate() {
        if i % p == 0 {
            let b = &blocks[i / p];
            for (object, tm) in [(imau, b.access), (imem, b.memory)] {
                occupancy.push(Occupancy {
                    instr: b.first as u32,
                    object,
                    enter: tm.enter.expect("simulated"),
                    leave: tm.leave.expect("simulated"),
                });
            }
        }
        for s in list {
            let leave = s.t.leave.expect("simulated");
            total = total.max(leave);
            occupancy.push(Occupancy { instr: i as u32, object: s.object, enter: s.t.enter.expect("simulated"), leave });
        }
    }
    Ok(SimTrace { occupancy, total, cycles_visited: visited })
}
