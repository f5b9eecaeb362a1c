//! Architecture models: typed hardware objects and the associations between
//! them (forward, contains, reads, writes).
//!
//! A model is loaded from a JSON document, linked into index tables, and can
//! then be checked with [`validate_model`] and used to route instructions.

mod route;
pub mod systolic;
pub mod tensor;
mod validate;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::LatencyExpr;

pub(crate) use route::memory_latency;
pub use route::{route_instruction, Access, Hop, MemoryHop, ResolvedInstruction, Route, RouteError};
pub use validate::{validate_model, Diagnostic};

/// Dense index of an object inside an [`ArchitectureModel`].
pub type ObjectId = u32;
/// Dense index of a register across all register files of a model.
pub type RegId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    PipelineStage,
    ExecuteStage,
    InstructionFetchStage,
    FunctionalUnit,
    MemoryAccessUnit,
    InstructionMemoryAccessUnit,
    RegisterFile,
    Memory,
    /// Route terminus of memory loads. Never declared in a document.
    WriteBack,
}

impl ObjectKind {
    /// Kinds that can appear on the forward graph.
    pub fn is_stage(self) -> bool {
        matches!(
            self,
            ObjectKind::PipelineStage | ObjectKind::ExecuteStage | ObjectKind::InstructionFetchStage
        )
    }

    /// Kinds that execute instructions inside an execute stage.
    pub fn is_unit(self) -> bool {
        matches!(self, ObjectKind::FunctionalUnit | ObjectKind::MemoryAccessUnit)
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn one() -> u32 {
    1
}

/// A hardware object as it appears in a model document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum HardwareObject {
    PipelineStage {
        name: String,
        latency: LatencyExpr,
    },
    ExecuteStage {
        name: String,
        latency: LatencyExpr,
    },
    InstructionFetchStage {
        name: String,
        latency: LatencyExpr,
        issue_buffer_size: u32,
    },
    FunctionalUnit {
        name: String,
        latency: LatencyExpr,
        to_process: Vec<String>,
    },
    MemoryAccessUnit {
        name: String,
        latency: LatencyExpr,
        to_process: Vec<String>,
    },
    InstructionMemoryAccessUnit {
        name: String,
        latency: LatencyExpr,
    },
    RegisterFile {
        name: String,
        registers: Vec<String>,
        #[serde(default = "one")]
        data_width: u32,
    },
    Memory {
        name: String,
        address_ranges: Vec<[u64; 2]>,
        #[serde(default = "one")]
        data_width: u32,
        port_width: u32,
        read_latency: LatencyExpr,
        write_latency: LatencyExpr,
        #[serde(default = "one")]
        max_concurrent_requests: u32,
    },
}

impl HardwareObject {
    pub fn name(&self) -> &str {
        match self {
            HardwareObject::PipelineStage { name, .. }
            | HardwareObject::ExecuteStage { name, .. }
            | HardwareObject::InstructionFetchStage { name, .. }
            | HardwareObject::FunctionalUnit { name, .. }
            | HardwareObject::MemoryAccessUnit { name, .. }
            | HardwareObject::InstructionMemoryAccessUnit { name, .. }
            | HardwareObject::RegisterFile { name, .. }
            | HardwareObject::Memory { name, .. } => name,
        }
    }

    pub fn kind(&self) -> ObjectKind {
        match self {
            HardwareObject::PipelineStage { .. } => ObjectKind::PipelineStage,
            HardwareObject::ExecuteStage { .. } => ObjectKind::ExecuteStage,
            HardwareObject::InstructionFetchStage { .. } => ObjectKind::InstructionFetchStage,
            HardwareObject::FunctionalUnit { .. } => ObjectKind::FunctionalUnit,
            HardwareObject::MemoryAccessUnit { .. } => ObjectKind::MemoryAccessUnit,
            HardwareObject::InstructionMemoryAccessUnit { .. } => {
                ObjectKind::InstructionMemoryAccessUnit
            }
            HardwareObject::RegisterFile { .. } => ObjectKind::RegisterFile,
            HardwareObject::Memory { .. } => ObjectKind::Memory,
        }
    }

    /// Processing latency of stages and units.
    pub fn latency(&self) -> Option<&LatencyExpr> {
        match self {
            HardwareObject::PipelineStage { latency, .. }
            | HardwareObject::ExecuteStage { latency, .. }
            | HardwareObject::InstructionFetchStage { latency, .. }
            | HardwareObject::FunctionalUnit { latency, .. }
            | HardwareObject::MemoryAccessUnit { latency, .. }
            | HardwareObject::InstructionMemoryAccessUnit { latency, .. } => Some(latency),
            _ => None,
        }
    }

    pub fn to_process(&self) -> &[String] {
        match self {
            HardwareObject::FunctionalUnit { to_process, .. }
            | HardwareObject::MemoryAccessUnit { to_process, .. } => to_process,
            _ => &[],
        }
    }
}

/// One memory transaction of an instruction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemAccess {
    pub memory: String,
    pub address: u64,
    #[serde(default = "one")]
    pub words: u32,
}

impl MemAccess {
    pub fn new(memory: impl Into<String>, address: u64, words: u32) -> Self {
        MemAccess { memory: memory.into(), address, words }
    }
}

/// An instruction as metadata: what it occupies, never what it computes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instruction {
    pub operation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub read_registers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub write_registers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub read_addresses: Vec<MemAccess>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub write_addresses: Vec<MemAccess>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub immediates: BTreeMap<String, i64>,
}

impl Instruction {
    pub fn new(operation: impl Into<String>) -> Self {
        Instruction { operation: operation.into(), ..Default::default() }
    }

    pub fn reads<S: Into<String>>(mut self, regs: impl IntoIterator<Item = S>) -> Self {
        self.read_registers.extend(regs.into_iter().map(Into::into));
        self
    }

    pub fn writes<S: Into<String>>(mut self, regs: impl IntoIterator<Item = S>) -> Self {
        self.write_registers.extend(regs.into_iter().map(Into::into));
        self
    }

    pub fn loads(mut self, memory: &str, address: u64, words: u32) -> Self {
        self.read_addresses.push(MemAccess::new(memory, address, words));
        self
    }

    pub fn stores(mut self, memory: &str, address: u64, words: u32) -> Self {
        self.write_addresses.push(MemAccess::new(memory, address, words));
        self
    }

    pub fn imm(mut self, name: &str, value: i64) -> Self {
        self.immediates.insert(name.to_string(), value);
        self
    }

    pub fn accesses_memory(&self) -> bool {
        !self.read_addresses.is_empty() || !self.write_addresses.is_empty()
    }
}

/// The serialized form of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    pub objects: Vec<HardwareObject>,
    #[serde(default)]
    pub forward: Vec<(String, String)>,
    #[serde(default)]
    pub contains: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub reads: Vec<(String, String)>,
    #[serde(default)]
    pub writes: Vec<(String, String)>,
    pub instruction_memory: String,
    pub fetch_stage: String,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate object name `{0}`")]
    DuplicateName(String),
    #[error("{context} references unknown object `{name}`")]
    Dangling { context: String, name: String },
}

/// A linked, immutable architecture model.
#[derive(Debug, Clone)]
pub struct ArchitectureModel {
    doc: ModelDocument,
    by_name: HashMap<String, ObjectId>,
    forward_out: Vec<Vec<ObjectId>>,
    forward_in_count: Vec<u32>,
    stage_of_unit: Vec<Option<ObjectId>>,
    units_of_stage: Vec<Vec<ObjectId>>,
    containers: Vec<u32>,
    read_rights: HashSet<(ObjectId, ObjectId)>,
    write_rights: HashSet<(ObjectId, ObjectId)>,
    reg_by_name: HashMap<String, RegId>,
    reg_names: Vec<String>,
    reg_file: Vec<ObjectId>,
    duplicate_registers: Vec<String>,
    instruction_memory: ObjectId,
    fetch_stage: ObjectId,
    imaus: Vec<ObjectId>,
    /// Shortest forward path from the fetch stage to every reachable stage,
    /// excluding the fetch stage itself and including the target.
    paths_from_fetch: Vec<Option<Vec<ObjectId>>>,
}

impl ArchitectureModel {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ModelDocument = serde_path_to_error::deserialize(de).map_err(|e| {
            ModelError::Schema { path: e.path().to_string(), message: e.inner().to_string() }
        })?;
        Self::from_document(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("model documents always serialize")
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, ModelError> {
        let n = doc.objects.len();
        let mut by_name = HashMap::with_capacity(n);
        for (i, o) in doc.objects.iter().enumerate() {
            if by_name.insert(o.name().to_string(), i as ObjectId).is_some() {
                return Err(ModelError::DuplicateName(o.name().to_string()));
            }
        }
        let lookup = |context: &str, name: &str| {
            by_name.get(name).copied().ok_or_else(|| ModelError::Dangling {
                context: context.to_string(),
                name: name.to_string(),
            })
        };

        let mut forward_out = vec![Vec::new(); n];
        let mut forward_in_count = vec![0u32; n];
        for (a, b) in &doc.forward {
            let x = lookup("forward edge", a)?;
            let y = lookup("forward edge", b)?;
            forward_out[x as usize].push(y);
            forward_in_count[y as usize] += 1;
        }

        let mut stage_of_unit = vec![None; n];
        let mut units_of_stage = vec![Vec::new(); n];
        let mut containers = vec![0u32; n];
        for (stage, units) in &doc.contains {
            let s = lookup("contains", stage)?;
            for u in units {
                let u = lookup(&format!("contains of `{stage}`"), u)?;
                containers[u as usize] += 1;
                if stage_of_unit[u as usize].is_none() {
                    stage_of_unit[u as usize] = Some(s);
                }
                units_of_stage[s as usize].push(u);
            }
        }
        // Keep contained units in declaration order for deterministic arbitration.
        for units in &mut units_of_stage {
            units.sort_unstable();
        }

        let mut read_rights = HashSet::new();
        for (u, s) in &doc.reads {
            read_rights.insert((lookup("reads", u)?, lookup("reads", s)?));
        }
        let mut write_rights = HashSet::new();
        for (u, s) in &doc.writes {
            write_rights.insert((lookup("writes", u)?, lookup("writes", s)?));
        }

        let mut reg_by_name = HashMap::new();
        let mut reg_names = Vec::new();
        let mut reg_file = Vec::new();
        let mut duplicate_registers = Vec::new();
        for (i, o) in doc.objects.iter().enumerate() {
            if let HardwareObject::RegisterFile { registers, .. } = o {
                for r in registers {
                    if reg_by_name.contains_key(r) {
                        duplicate_registers.push(r.clone());
                        continue;
                    }
                    reg_by_name.insert(r.clone(), reg_names.len() as RegId);
                    reg_names.push(r.clone());
                    reg_file.push(i as ObjectId);
                }
            }
        }

        let instruction_memory = lookup("instruction_memory", &doc.instruction_memory)?;
        let fetch_stage = lookup("fetch_stage", &doc.fetch_stage)?;
        let imaus = doc
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.kind() == ObjectKind::InstructionMemoryAccessUnit)
            .map(|(i, _)| i as ObjectId)
            .collect();

        let mut paths_from_fetch: Vec<Option<Vec<ObjectId>>> = vec![None; n];
        let mut parent: Vec<Option<ObjectId>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([fetch_stage]);
        seen[fetch_stage as usize] = true;
        while let Some(x) = queue.pop_front() {
            for &y in &forward_out[x as usize] {
                if !seen[y as usize] {
                    seen[y as usize] = true;
                    parent[y as usize] = Some(x);
                    queue.push_back(y);
                }
            }
        }
        for target in 0..n {
            if !seen[target] || target as ObjectId == fetch_stage {
                continue;
            }
            let mut path = vec![target as ObjectId];
            let mut cur = target as ObjectId;
            while let Some(p) = parent[cur as usize] {
                if p == fetch_stage {
                    break;
                }
                path.push(p);
                cur = p;
            }
            path.reverse();
            paths_from_fetch[target] = Some(path);
        }

        Ok(ArchitectureModel {
            doc,
            by_name,
            forward_out,
            forward_in_count,
            stage_of_unit,
            units_of_stage,
            containers,
            read_rights,
            write_rights,
            reg_by_name,
            reg_names,
            reg_file,
            duplicate_registers,
            instruction_memory,
            fetch_stage,
            imaus,
            paths_from_fetch,
        })
    }

    pub fn document(&self) -> &ModelDocument {
        &self.doc
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn objects(&self) -> &[HardwareObject] {
        &self.doc.objects
    }

    pub fn object(&self, id: ObjectId) -> &HardwareObject {
        &self.doc.objects[id as usize]
    }

    pub fn id(&self, name: &str) -> Option<ObjectId> {
        self.by_name.get(name).copied()
    }

    /// Name of an object id, with `writeBack` for the synthetic terminus.
    pub fn object_name(&self, id: ObjectId) -> &str {
        if id == crate::aidg::WRITE_BACK {
            "writeBack"
        } else {
            self.object(id).name()
        }
    }

    pub fn count_kind(&self, kind: ObjectKind) -> usize {
        self.doc.objects.iter().filter(|o| o.kind() == kind).count()
    }

    pub fn forward_successors(&self, id: ObjectId) -> &[ObjectId] {
        &self.forward_out[id as usize]
    }

    pub fn stage_of(&self, unit: ObjectId) -> Option<ObjectId> {
        self.stage_of_unit[unit as usize]
    }

    pub fn units_of(&self, stage: ObjectId) -> &[ObjectId] {
        &self.units_of_stage[stage as usize]
    }

    pub fn can_read(&self, unit: ObjectId, storage: ObjectId) -> bool {
        self.read_rights.contains(&(unit, storage))
    }

    pub fn can_write(&self, unit: ObjectId, storage: ObjectId) -> bool {
        self.write_rights.contains(&(unit, storage))
    }

    pub fn register(&self, name: &str) -> Option<RegId> {
        self.reg_by_name.get(name).copied()
    }

    pub fn register_name(&self, id: RegId) -> &str {
        &self.reg_names[id as usize]
    }

    pub fn register_file_of(&self, id: RegId) -> ObjectId {
        self.reg_file[id as usize]
    }

    pub fn register_count(&self) -> usize {
        self.reg_names.len()
    }

    pub fn instruction_memory(&self) -> ObjectId {
        self.instruction_memory
    }

    pub fn fetch_stage(&self) -> ObjectId {
        self.fetch_stage
    }

    /// The instruction memory access unit, if exactly one is declared.
    pub fn imau(&self) -> Option<ObjectId> {
        match self.imaus.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    /// Number of instructions fetched per instruction-memory transaction.
    pub fn instruction_port_width(&self) -> u32 {
        match self.object(self.instruction_memory) {
            HardwareObject::Memory { port_width, .. } => *port_width,
            _ => 1,
        }
    }

    pub fn issue_buffer_size(&self) -> u32 {
        match self.object(self.fetch_stage) {
            HardwareObject::InstructionFetchStage { issue_buffer_size, .. } => *issue_buffer_size,
            _ => 1,
        }
    }

    pub(crate) fn path_from_fetch(&self, stage: ObjectId) -> Option<&[ObjectId]> {
        self.paths_from_fetch[stage as usize].as_deref()
    }

    pub(crate) fn container_count(&self, unit: ObjectId) -> u32 {
        self.containers[unit as usize]
    }

    pub(crate) fn forward_in_count(&self, id: ObjectId) -> u32 {
        self.forward_in_count[id as usize]
    }

    pub(crate) fn duplicate_registers(&self) -> &[String] {
        &self.duplicate_registers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "name": "tiny",
        "objects": [
            {"kind": "Memory", "name": "imem", "address_ranges": [[0, 1024]], "port_width": 1,
             "read_latency": 1, "write_latency": 1},
            {"kind": "InstructionMemoryAccessUnit", "name": "imau", "latency": 1},
            {"kind": "InstructionFetchStage", "name": "fetch", "latency": 1, "issue_buffer_size": 1},
            {"kind": "ExecuteStage", "name": "ex", "latency": 0},
            {"kind": "FunctionalUnit", "name": "alu", "latency": "2+w", "to_process": ["add"]},
            {"kind": "RegisterFile", "name": "rf", "registers": ["r0", "r1"]}
        ],
        "forward": [["fetch", "ex"]],
        "contains": {"ex": ["alu"]},
        "reads": [["imau", "imem"], ["alu", "rf"]],
        "writes": [["alu", "rf"]],
        "instruction_memory": "imem",
        "fetch_stage": "fetch"
    }"#;

    #[test]
    fn parses_and_links() {
        let m = ArchitectureModel::from_json(TINY).unwrap();
        assert_eq!(m.objects().len(), 6);
        let alu = m.id("alu").unwrap();
        assert_eq!(m.stage_of(alu), m.id("ex"));
        assert!(m.can_read(alu, m.id("rf").unwrap()));
        assert_eq!(m.register("r1"), Some(1));
        assert_eq!(m.imau(), m.id("imau"));
        assert_eq!(m.path_from_fetch(m.id("ex").unwrap()), Some(&[m.id("ex").unwrap()][..]));
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn round_trips_through_json() {
        let m = ArchitectureModel::from_json(TINY).unwrap();
        let again = ArchitectureModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m.document(), again.document());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = TINY.replace("\"fetch_stage\": \"fetch\"", "\"fetch_stage\": \"fetch\", \"extra\": 1");
        assert!(matches!(ArchitectureModel::from_json(&bad), Err(ModelError::Schema { .. })));
        let bad = TINY.replace("\"issue_buffer_size\": 1", "\"issue_buffer_size\": 1, \"colour\": 2");
        let err = ArchitectureModel::from_json(&bad).unwrap_err();
        assert!(matches!(err, ModelError::Schema { .. }), "{err}");
    }

    #[test]
    fn rejects_dangling_register_file() {
        let bad = TINY.replace("[\"alu\", \"rf\"]]", "[\"alu\", \"rf9\"]]");
        let err = ArchitectureModel::from_json(&bad).unwrap_err();
        assert!(matches!(err, ModelError::Dangling { ref name, .. } if name == "rf9"), "{err}");
    }

    #[test]
    fn rejects_duplicate_names() {
        let bad = TINY.replace("\"name\": \"rf\"", "\"name\": \"alu\"");
        assert!(matches!(ArchitectureModel::from_json(&bad), Err(ModelError::DuplicateName(_))));
    }

    #[test]
    fn rejects_bad_latency_text() {
        let bad = TINY.replace("\"2+w\"", "\"2+\"");
        let err = ArchitectureModel::from_json(&bad).unwrap_err();
        match err {
            ModelError::Schema { path, .. } => assert!(path.contains("objects"), "{path}"),
            other => panic!("unexpected {other}"),
        }
    }
}
