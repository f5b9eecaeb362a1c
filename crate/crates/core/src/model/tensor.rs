//! Tensor-level models where one instruction covers a whole layer or tile.

use std::collections::BTreeMap;

use super::{ArchitectureModel, HardwareObject, ModelDocument};
use crate::expr::LatencyExpr;

pub const CONV_EXT_UNIT: &str = "macArrayAndOPU";

fn front_end(objects: &mut Vec<HardwareObject>, instr_latency: u64) {
    let c = LatencyExpr::constant;
    objects.push(HardwareObject::Memory {
        name: "instructionMemory".into(),
        address_ranges: vec![[0, 1 << 20]],
        data_width: 64,
        port_width: 1,
        read_latency: c(instr_latency),
        write_latency: c(1),
        max_concurrent_requests: 1,
    });
    objects.push(HardwareObject::InstructionMemoryAccessUnit {
        name: "instructionMemoryAccessUnit".into(),
        latency: c(1),
    });
    objects.push(HardwareObject::InstructionFetchStage {
        name: "instructionFetchStage".into(),
        latency: c(1),
        issue_buffer_size: 1,
    });
}

/// A single-unit accelerator processing `conv_ext` instructions whose latency
/// is the given expression over the immediates `C, C_w, K, F, s, p`.
pub fn conv_ext_model(latency: LatencyExpr) -> ArchitectureModel {
    let mut objects = Vec::new();
    front_end(&mut objects, 1);
    objects.push(HardwareObject::ExecuteStage {
        name: "macArrayStage".into(),
        latency: LatencyExpr::constant(0),
    });
    objects.push(HardwareObject::FunctionalUnit {
        name: CONV_EXT_UNIT.into(),
        latency,
        to_process: vec!["conv_ext".into()],
    });
    let doc = ModelDocument {
        name: "conv_ext_accelerator".into(),
        objects,
        forward: vec![("instructionFetchStage".into(), "macArrayStage".into())],
        contains: BTreeMap::from([("macArrayStage".into(), vec![CONV_EXT_UNIT.into()])]),
        reads: vec![("instructionMemoryAccessUnit".into(), "instructionMemory".into())],
        writes: vec![],
        instruction_memory: "instructionMemory".into(),
        fetch_stage: "instructionFetchStage".into(),
    };
    ArchitectureModel::from_document(doc).expect("generated models are well linked")
}

/// Latencies of the tile-level GEMM accelerator.
#[derive(Debug, Clone)]
pub struct TileLatencies {
    pub move_in: LatencyExpr,
    pub move_out: LatencyExpr,
    pub preload: LatencyExpr,
    pub compute: LatencyExpr,
    pub memory_read: LatencyExpr,
    pub memory_write: LatencyExpr,
}

impl Default for TileLatencies {
    fn default() -> Self {
        let p = |s: &str| LatencyExpr::parse(s).expect("valid default latency");
        TileLatencies {
            move_in: p("2"),
            move_out: p("2"),
            preload: p("tile"),
            compute: p("tile+2"),
            memory_read: p("8+ceil_div(num_words,16)"),
            memory_write: p("8+ceil_div(num_words,16)"),
        }
    }
}

/// A decoupled access-execute style tile accelerator: a load unit and a store
/// unit move `tile×tile` blocks between main memory and the scratchpad
/// registers, an execute unit runs `preload_tile` and `compute_tile`.
pub fn gemm_tile_model(tile: u32, lat: &TileLatencies) -> ArchitectureModel {
    assert!(tile >= 1);
    let mut objects = Vec::new();
    front_end(&mut objects, 1);
    let c = LatencyExpr::constant;
    objects.push(HardwareObject::Memory {
        name: "mainMemory".into(),
        address_ranges: vec![[0, 1 << 48]],
        data_width: 8,
        port_width: tile * tile,
        read_latency: lat.memory_read.clone(),
        write_latency: lat.memory_write.clone(),
        max_concurrent_requests: 1,
    });
    let units = [
        ("loadStage", "tileLoadUnit", "mvin_tile", true, lat.move_in.clone()),
        ("executeStage", "meshUnit", "", false, lat.compute.clone()),
        ("storeStage", "tileStoreUnit", "mvout_tile", true, lat.move_out.clone()),
    ];
    let mut contains = BTreeMap::new();
    let mut forward = Vec::new();
    for (stage, unit, op, mau, latency) in units {
        objects.push(HardwareObject::ExecuteStage { name: stage.into(), latency: c(0) });
        let to_process: Vec<String> = if mau {
            vec![op.into()]
        } else {
            vec!["preload_tile".into(), "compute_tile".into()]
        };
        objects.push(if mau {
            HardwareObject::MemoryAccessUnit { name: unit.into(), latency, to_process }
        } else {
            HardwareObject::FunctionalUnit { name: unit.into(), latency, to_process }
        });
        contains.insert(stage.to_string(), vec![unit.to_string()]);
        forward.push(("instructionFetchStage".to_string(), stage.to_string()));
    }
    objects.push(HardwareObject::RegisterFile {
        name: "scratchpad".into(),
        registers: vec!["tileA".into(), "tileB".into()],
        data_width: 8,
    });
    objects.push(HardwareObject::RegisterFile {
        name: "accumulator".into(),
        registers: vec!["tileW".into(), "tileC".into()],
        data_width: 32,
    });
    let doc = ModelDocument {
        name: format!("gemm_tile_{tile}"),
        objects,
        forward,
        contains,
        reads: vec![
            ("instructionMemoryAccessUnit".into(), "instructionMemory".into()),
            ("tileLoadUnit".into(), "mainMemory".into()),
            ("meshUnit".into(), "scratchpad".into()),
            ("meshUnit".into(), "accumulator".into()),
            ("tileStoreUnit".into(), "accumulator".into()),
        ],
        writes: vec![
            ("tileLoadUnit".into(), "scratchpad".into()),
            ("meshUnit".into(), "accumulator".into()),
            ("tileStoreUnit".into(), "mainMemory".into()),
        ],
        instruction_memory: "instructionMemory".into(),
        fetch_stage: "instructionFetchStage".into(),
    };
    ArchitectureModel::from_document(doc).expect("generated models are well linked")
}
