use std::fmt;

use super::{ArchitectureModel, HardwareObject, ObjectId, ObjectKind};

/// A violated model rule, attributed to one object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub object: String,
    pub rule: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.object, self.rule)
    }
}

/// Check every structural rule of a model. An empty result means the model
/// can be used for routing and graph construction.
pub fn validate_model(m: &ArchitectureModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |object: &str, rule: String| {
        out.push(Diagnostic { object: object.to_string(), rule })
    };

    let imem = m.instruction_memory();
    if m.object(imem).kind() != ObjectKind::Memory {
        diag(m.object(imem).name(), "instruction_memory must name a Memory".into());
    }
    let fetch = m.fetch_stage();
    if m.object(fetch).kind() != ObjectKind::InstructionFetchStage {
        diag(m.object(fetch).name(), "fetch_stage must name an InstructionFetchStage".into());
    }
    for (kind, what) in [
        (ObjectKind::InstructionFetchStage, "instruction fetch stage"),
        (ObjectKind::InstructionMemoryAccessUnit, "instruction memory access unit"),
    ] {
        let n = m.count_kind(kind);
        if n != 1 {
            diag(m.name(), format!("model needs exactly one {what}, found {n}"));
        }
    }
    if let Some(imau) = m.imau() {
        if !m.can_read(imau, imem) {
            diag(m.object(imau).name(), "must read the instruction memory".into());
        }
    }

    for (i, o) in m.objects().iter().enumerate() {
        let id = i as ObjectId;
        let name = o.name();
        if let Some(lat) = o.latency() {
            check_constant(name, "latency", lat, &mut diag);
        }
        match o {
            HardwareObject::InstructionFetchStage { issue_buffer_size, .. } => {
                if *issue_buffer_size == 0 {
                    diag(name, "issue_buffer_size must be at least 1".into());
                }
            }
            HardwareObject::FunctionalUnit { to_process, .. }
            | HardwareObject::MemoryAccessUnit { to_process, .. } => {
                if to_process.is_empty() {
                    diag(name, "to_process must not be empty".into());
                }
                match m.container_count(id) {
                    1 => {}
                    0 => diag(name, "unit is not contained in any ExecuteStage".into()),
                    n => diag(name, format!("unit is contained in {n} ExecuteStages")),
                }
            }
            HardwareObject::RegisterFile { data_width, .. } => {
                if *data_width == 0 {
                    diag(name, "data_width must be at least 1".into());
                }
            }
            HardwareObject::Memory {
                address_ranges,
                data_width,
                port_width,
                read_latency,
                write_latency,
                max_concurrent_requests,
                ..
            } => {
                if *port_width == 0 {
                    diag(name, "port_width must be at least 1".into());
                }
                if *data_width == 0 {
                    diag(name, "data_width must be at least 1".into());
                }
                if *max_concurrent_requests == 0 {
                    diag(name, "max_concurrent_requests must be at least 1".into());
                }
                if address_ranges.iter().any(|[lo, hi]| lo >= hi) {
                    diag(name, "address ranges must be non-empty [start, end) pairs".into());
                }
                check_constant(name, "read_latency", read_latency, &mut diag);
                check_constant(name, "write_latency", write_latency, &mut diag);
            }
            _ => {}
        }
        if o.kind() == ObjectKind::ExecuteStage {
            for &u in m.units_of(id) {
                if !m.object(u).kind().is_unit() {
                    diag(name, format!("contains `{}` which is not a functional unit", m.object(u).name()));
                }
            }
        } else if !m.units_of(id).is_empty() {
            diag(name, "only ExecuteStages may contain units".into());
        }
        for &succ in m.forward_successors(id) {
            let sk = m.object(succ).kind();
            if !o.kind().is_stage() || !sk.is_stage() || sk == ObjectKind::InstructionFetchStage {
                diag(
                    name,
                    format!("forward edge to `{}` must connect pipeline stages", m.object(succ).name()),
                );
            }
        }
        if o.kind() == ObjectKind::InstructionFetchStage && m.forward_in_count(id) > 0 {
            diag(name, "fetch stage cannot have in-going forward edges".into());
        }
    }

    for (u, s) in m.document().reads.iter().chain(&m.document().writes) {
        let (Some(uid), Some(sid)) = (m.id(u), m.id(s)) else { continue };
        let uk = m.object(uid).kind();
        let sk = m.object(sid).kind();
        let ok = match sk {
            ObjectKind::RegisterFile => uk.is_unit(),
            ObjectKind::Memory => {
                matches!(uk, ObjectKind::MemoryAccessUnit | ObjectKind::InstructionMemoryAccessUnit)
            }
            _ => false,
        };
        if !ok {
            diag(u, format!("{uk} cannot hold access rights on {sk} `{s}`"));
        }
    }

    for r in m.duplicate_registers() {
        diag(r, "register name is declared in more than one RegisterFile".into());
    }

    if let Some(cycle_at) = find_forward_cycle(m) {
        diag(m.object(cycle_at).name(), "forward graph contains a cycle".into());
    }
    out
}

fn check_constant(
    name: &str,
    what: &str,
    lat: &crate::expr::LatencyExpr,
    diag: &mut impl FnMut(&str, String),
) {
    if lat.free_variables().is_empty() {
        if let Err(e) = lat.eval(&[] as &[(&str, i64)]) {
            diag(name, format!("{what} does not evaluate: {e}"));
        }
    }
}

/// Returns an object on a forward cycle, if any.
fn find_forward_cycle(m: &ArchitectureModel) -> Option<ObjectId> {
    let n = m.objects().len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(ObjectId, usize)> = vec![(start as ObjectId, 0)];
        state[start] = 1;
        while let Some(&mut (x, ref mut next)) = stack.last_mut() {
            let succ = m.forward_successors(x);
            if *next < succ.len() {
                let y = succ[*next];
                *next += 1;
                match state[y as usize] {
                    0 => {
                        state[y as usize] = 1;
                        stack.push((y, 0));
                    }
                    1 => return Some(y),
                    _ => {}
                }
            } else {
                state[x as usize] = 2;
                stack.pop();
            }
        }
    }
    None
}
