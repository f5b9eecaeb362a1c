//! Enter and leave times of graph nodes.
//!
//! Nodes are visited once in id order. Entering waits for the forward and
//! structural predecessors; fetch nodes instead take the first cycle with a
//! free issue slot. Processing starts once every data predecessor has left.
//! A node with one forward successor leaves only when that successor's object
//! has been vacated; an instruction memory node releases each instruction of
//! its block in the first cycle with a free forwarding slot.

use std::collections::HashMap;

use thiserror::Error;

use crate::aidg::{Aidg, NodeId, NodeKind, NONE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("cycle count overflow at node {0}")]
    Overflow(NodeId),
    #[error("fetch block starting at instruction {0} grew after it was evaluated")]
    PrefixChanged(u32),
    #[error("prior result covers {prior} nodes but the graph has only {graph}")]
    PriorTooLarge { prior: usize, graph: usize },
    #[error("graph is empty")]
    Empty,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalResult {
    pub t_enter: Vec<u64>,
    pub t_leave: Vec<u64>,
    /// Per instruction: the cycle its fetch block forwarded it to the fetch
    /// stage. This is the per-edge leave time of the merged memory node.
    pub release: Vec<u64>,
    /// Fetch-stage admissions per cycle.
    pub b_enter: HashMap<u64, u32>,
    /// Instruction-memory forwards per cycle.
    pub b_forward: HashMap<u64, u32>,
    pub b_max: u32,
    pub visit_count: u64,
    open_block: Option<(NodeId, u32)>,
}

impl EvalResult {
    pub fn len(&self) -> usize {
        self.t_enter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_enter.is_empty()
    }
}

fn first_free(map: &mut HashMap<u64, u32>, from: u64, cap: u32) -> u64 {
    let mut t = from;
    loop {
        let slot = map.entry(t).or_insert(0);
        if *slot < cap {
            *slot += 1;
            return t;
        }
        t += 1;
    }
}

/// Evaluate every node of `g`, or only the nodes appended since `prior`.
pub fn evaluate(g: &Aidg, b_max: u32, prior: Option<EvalResult>) -> Result<EvalResult, EvalError> {
    let mut r = prior.unwrap_or_else(|| EvalResult { b_max, ..Default::default() });
    r.b_max = b_max.max(1);
    let start = r.t_enter.len();
    if start > g.len() {
        return Err(EvalError::PriorTooLarge { prior: start, graph: g.len() });
    }
    if let Some((mem, span)) = r.open_block {
        if g.node(mem).span != span {
            return Err(EvalError::PrefixChanged(g.node(mem).instr));
        }
    }
    r.t_enter.reserve(g.len() - start);
    r.t_leave.reserve(g.len() - start);
    let nodes = g.nodes();
    for id in start..g.len() {
        let n = &nodes[id];
        let nid = id as NodeId;
        let arrival = if n.fwd_in == NONE {
            None
        } else if nodes[n.fwd_in as usize].kind == NodeKind::MergedMemory {
            Some(r.release[n.instr as usize])
        } else {
            Some(r.t_leave[n.fwd_in as usize])
        };
        let structural = (n.struct_in != NONE).then(|| r.t_leave[n.struct_in as usize]);
        let enter = match (arrival, structural, n.buf_in != NONE) {
            (Some(a), _, true) => first_free(&mut r.b_enter, a, r.b_max),
            (None, None, _) => 0,
            (None, Some(s), _) => s,
            (Some(a), None, false) => a,
            (Some(a), Some(s), false) => a.max(s),
        };
        let ready = g
            .data_preds(nid)
            .iter()
            .map(|&d| r.t_leave[d as usize])
            .max()
            .unwrap_or(0);
        let stop = enter.max(ready).checked_add(n.latency).ok_or(EvalError::Overflow(nid))?;
        let leave = match n.kind {
            NodeKind::MergedMemory => {
                let mut last = stop;
                for _ in 0..n.span {
                    let t = first_free(&mut r.b_forward, stop, r.b_max);
                    r.release.push(t);
                    last = last.max(t);
                }
                last
            }
            _ if n.fwd_out != NONE => {
                let next_struct = nodes[n.fwd_out as usize].struct_in;
                if next_struct != NONE && (next_struct as usize) < id {
                    stop.max(r.t_leave[next_struct as usize])
                } else {
                    stop
                }
            }
            _ => stop,
        };
        r.t_enter.push(enter);
        r.t_leave.push(leave);
        r.visit_count += 1;
    }
    r.open_block = g
        .blocks()
        .last()
        .map(|b| (b.memory, g.node(b.memory).span))
        .filter(|&(mem, span)| {
            let n = g.node(mem);
            span < g.port_width() && n.instr + span == g.instruction_count()
        });
    Ok(r)
}

/// End-to-end latency: last leave minus first enter.
pub fn aidg_latency(r: &EvalResult) -> Result<u64, EvalError> {
    let hi = r.t_leave.iter().max().ok_or(EvalError::Empty)?;
    let lo = r.t_enter.iter().min().ok_or(EvalError::Empty)?;
    Ok(hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aidg::{build_aidg, AidgBuilder};
    use crate::model::systolic::{generate_systolic_array, reg, SystolicConfig};
    use crate::model::Instruction;

    fn model() -> crate::model::ArchitectureModel {
        generate_systolic_array(&SystolicConfig::new(2, 2, 2))
    }

    #[test]
    fn single_instruction_chain() {
        let m = model();
        let i = Instruction::new("mac").reads([reg(0, 0, "x")]).writes([reg(0, 0, "acc")]);
        let g = build_aidg(&m, &[i]).unwrap();
        let r = evaluate(&g, m.issue_buffer_size(), None).unwrap();
        // access 2, memory 3, fetch 1, processing element 3
        assert_eq!(aidg_latency(&r), Ok(9));
        assert_eq!(r.visit_count, g.len() as u64);
    }

    #[test]
    fn empty_graph_has_no_latency() {
        let r = EvalResult::default();
        assert_eq!(aidg_latency(&r), Err(EvalError::Empty));
    }

    #[test]
    fn incremental_matches_full() {
        let m = model();
        let instrs: Vec<Instruction> = (0..8)
            .map(|k| {
                Instruction::new("load")
                    .writes([reg(0, (k % 2) as u32, "x")])
                    .loads("dataMemory", k, 1)
            })
            .collect();
        let full = evaluate(&build_aidg(&m, &instrs).unwrap(), 2, None).unwrap();
        let mut b = AidgBuilder::new(&m).unwrap();
        b.extend(&instrs[..4]).unwrap();
        let part = evaluate(b.graph(), 2, None).unwrap();
        b.extend(&instrs[4..]).unwrap();
        let inc = evaluate(b.graph(), 2, Some(part)).unwrap();
        assert_eq!(inc.t_enter, full.t_enter);
        assert_eq!(inc.t_leave, full.t_leave);
        assert_eq!(inc.release, full.release);
    }

    #[test]
    fn growing_an_evaluated_block_is_rejected() {
        let m = model();
        let i = Instruction::new("mac").reads([reg(0, 0, "x")]).writes([reg(0, 0, "acc")]);
        let mut b = AidgBuilder::new(&m).unwrap();
        b.push(&i).unwrap();
        let part = evaluate(b.graph(), 2, None).unwrap();
        b.push(&i).unwrap();
        assert!(matches!(evaluate(b.graph(), 2, Some(part)), Err(EvalError::PrefixChanged(0))));
    }
}
