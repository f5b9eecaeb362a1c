//! Parameterizable systolic-array models.
//!
//! Load units sit on the top row and the left column, store units on the
//! bottom row. Every processing element owns a register file with an input
//! register `x`, a partial-sum register `acc`, a result register `out` and one
//! weight register `w{r}` per array row.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArchitectureModel, HardwareObject, ModelDocument};
use crate::expr::LatencyExpr;

pub const INSTRUCTION_MEMORY: &str = "instructionMemory";
pub const INSTRUCTION_ACCESS_UNIT: &str = "instructionMemoryAccessUnit";
pub const FETCH_STAGE: &str = "instructionFetchStage";
pub const DATA_MEMORY: &str = "dataMemory";

/// Operations every processing element accepts.
pub const PE_OPERATIONS: [&str; 6] = ["mac", "mul", "add", "move", "max", "min"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystolicLatencies {
    pub instruction_access: LatencyExpr,
    pub instruction_read: LatencyExpr,
    pub fetch: LatencyExpr,
    pub load_unit: LatencyExpr,
    pub store_unit: LatencyExpr,
    pub processing_element: LatencyExpr,
    pub data_read: LatencyExpr,
    pub data_write: LatencyExpr,
}

impl Default for SystolicLatencies {
    fn default() -> Self {
        let c = LatencyExpr::constant;
        SystolicLatencies {
            instruction_access: c(2),
            instruction_read: c(3),
            fetch: c(1),
            load_unit: c(3),
            store_unit: c(1),
            processing_element: c(3),
            data_read: c(3),
            data_write: c(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystolicConfig {
    pub rows: u32,
    pub cols: u32,
    /// Words per data-memory transaction.
    pub mem_port_width: u32,
    /// Instructions per instruction-memory transaction.
    #[serde(default = "default_instruction_port_width")]
    pub instruction_port_width: u32,
    #[serde(default = "default_issue_buffer")]
    pub issue_buffer_size: u32,
    #[serde(default)]
    pub latencies: SystolicLatencies,
}

fn default_instruction_port_width() -> u32 {
    2
}

fn default_issue_buffer() -> u32 {
    2
}

impl SystolicConfig {
    pub fn new(rows: u32, cols: u32, mem_port_width: u32) -> Self {
        SystolicConfig {
            rows,
            cols,
            mem_port_width,
            instruction_port_width: default_instruction_port_width(),
            issue_buffer_size: default_issue_buffer(),
            latencies: SystolicLatencies::default(),
        }
    }
}

pub fn pe_name(r: u32, c: u32) -> String {
    format!("processingElement[{r}][{c}]")
}

pub fn load_unit_name(r: u32, c: u32) -> String {
    format!("memoryLoadUnit[{r}][{c}]")
}

pub fn store_unit_name(r: u32, c: u32) -> String {
    format!("memoryStoreUnit[{r}][{c}]")
}

pub fn register_file_name(r: u32, c: u32) -> String {
    format!("registerFile[{r}][{c}]")
}

/// Register `reg` of the processing element at (r, c).
pub fn reg(r: u32, c: u32, reg: &str) -> String {
    format!("pe[{r}][{c}].{reg}")
}

/// Whether a load unit feeds the processing element at (r, c).
pub fn has_load_unit(r: u32, c: u32) -> bool {
    r == 0 || c == 0
}

/// Build a systolic-array model. Panics if a dimension or width is zero.
pub fn generate_systolic_array(cfg: &SystolicConfig) -> ArchitectureModel {
    assert!(cfg.rows >= 1 && cfg.cols >= 1, "array dimensions must be positive");
    assert!(cfg.mem_port_width >= 1 && cfg.instruction_port_width >= 1, "port widths must be positive");
    let l = &cfg.latencies;
    let zero = LatencyExpr::constant(0);
    let mut objects = vec![
        HardwareObject::Memory {
            name: INSTRUCTION_MEMORY.into(),
            address_ranges: vec![[0, 1 << 32]],
            data_width: 32,
            port_width: cfg.instruction_port_width,
            read_latency: l.instruction_read.clone(),
            write_latency: LatencyExpr::constant(1),
            max_concurrent_requests: 1,
        },
        HardwareObject::InstructionMemoryAccessUnit {
            name: INSTRUCTION_ACCESS_UNIT.into(),
            latency: l.instruction_access.clone(),
        },
        HardwareObject::InstructionFetchStage {
            name: FETCH_STAGE.into(),
            latency: l.fetch.clone(),
            issue_buffer_size: cfg.issue_buffer_size,
        },
        HardwareObject::Memory {
            name: DATA_MEMORY.into(),
            address_ranges: vec![[0, 1 << 48]],
            data_width: 32,
            port_width: cfg.mem_port_width,
            read_latency: l.data_read.clone(),
            write_latency: l.data_write.clone(),
            max_concurrent_requests: 1,
        },
    ];
    let mut forward = Vec::new();
    let mut contains = BTreeMap::new();
    let mut reads = vec![(INSTRUCTION_ACCESS_UNIT.to_string(), INSTRUCTION_MEMORY.to_string())];
    let mut writes = Vec::new();
    let mut unit = |objects: &mut Vec<HardwareObject>,
                    stage: String,
                    unit: HardwareObject| {
        forward.push((FETCH_STAGE.to_string(), stage.clone()));
        contains.insert(stage.clone(), vec![unit.name().to_string()]);
        objects.push(HardwareObject::ExecuteStage { name: stage, latency: zero.clone() });
        objects.push(unit);
    };

    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            if has_load_unit(r, c) {
                unit(
                    &mut objects,
                    format!("loadStage[{r}][{c}]"),
                    HardwareObject::MemoryAccessUnit {
                        name: load_unit_name(r, c),
                        latency: l.load_unit.clone(),
                        to_process: vec!["load".into()],
                    },
                );
                reads.push((load_unit_name(r, c), DATA_MEMORY.into()));
                writes.push((load_unit_name(r, c), register_file_name(r, c)));
            }
        }
    }
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            unit(
                &mut objects,
                format!("peStage[{r}][{c}]"),
                HardwareObject::FunctionalUnit {
                    name: pe_name(r, c),
                    latency: l.processing_element.clone(),
                    to_process: PE_OPERATIONS.iter().map(|s| s.to_string()).collect(),
                },
            );
            let mut registers = vec![reg(r, c, "x"), reg(r, c, "acc"), reg(r, c, "out")];
            registers.extend((0..cfg.rows).map(|i| reg(r, c, &format!("w{i}"))));
            objects.push(HardwareObject::RegisterFile {
                name: register_file_name(r, c),
                registers,
                data_width: 32,
            });
            reads.push((pe_name(r, c), register_file_name(r, c)));
            writes.push((pe_name(r, c), register_file_name(r, c)));
            if c + 1 < cfg.cols {
                writes.push((pe_name(r, c), register_file_name(r, c + 1)));
            }
            if r + 1 < cfg.rows {
                writes.push((pe_name(r, c), register_file_name(r + 1, c)));
            }
        }
    }
    let last = cfg.rows - 1;
    for c in 0..cfg.cols {
        unit(
            &mut objects,
            format!("storeStage[{last}][{c}]"),
            HardwareObject::MemoryAccessUnit {
                name: store_unit_name(last, c),
                latency: l.store_unit.clone(),
                to_process: vec!["store".into()],
            },
        );
        reads.push((store_unit_name(last, c), register_file_name(last, c)));
        writes.push((store_unit_name(last, c), DATA_MEMORY.into()));
    }

    let doc = ModelDocument {
        name: format!("systolic_{}x{}_p{}", cfg.rows, cfg.cols, cfg.mem_port_width),
        objects,
        forward,
        contains,
        reads,
        writes,
        instruction_memory: INSTRUCTION_MEMORY.into(),
        fetch_stage: FETCH_STAGE.into(),
    };
    ArchitectureModel::from_document(doc).expect("generated models are well linked")
}

/// Geometry of a model that follows the generator's naming scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystolicLayout {
    pub rows: u32,
    pub cols: u32,
    pub mem_port_width: u32,
}

impl SystolicLayout {
    /// Recover the array geometry from object names, if the model has one.
    pub fn detect(m: &ArchitectureModel) -> Option<SystolicLayout> {
        m.id(&pe_name(0, 0))?;
        m.id(DATA_MEMORY)?;
        let mut rows = 0;
        while m.id(&pe_name(rows, 0)).is_some() {
            rows += 1;
        }
        let mut cols = 0;
        while m.id(&pe_name(0, cols)).is_some() {
            cols += 1;
        }
        let HardwareObject::Memory { port_width, .. } = m.object(m.id(DATA_MEMORY)?) else {
            return None;
        };
        Some(SystolicLayout { rows, cols, mem_port_width: *port_width })
    }
}
