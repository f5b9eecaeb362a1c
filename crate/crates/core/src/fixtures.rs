//! Small reference inputs used by the examples, tests and CLI defaults.

use std::collections::BTreeMap;

use crate::expr::LatencyExpr;
use crate::mapper::{LayerKind, LayerSpec, LoopKernel, Operand};
use crate::model::systolic::{generate_systolic_array, reg, SystolicConfig, DATA_MEMORY};
use crate::model::{ArchitectureModel, HardwareObject, Instruction, ModelDocument};

const A: u64 = 0;
const B: u64 = 4096;
const C: u64 = 8192;

/// The 2×2 systolic array with instruction port width 2 and issue buffer 2.
pub fn reference_array() -> ArchitectureModel {
    generate_systolic_array(&SystolicConfig::new(2, 2, 2))
}

/// One iteration of an element-wise multiply-accumulate kernel on the 2×2
/// array: nine instructions touching `A[i]`, `B[i]`, `C[2i]` and `C[2i+1]`.
pub fn elementwise_iteration(i: u64) -> Vec<Instruction> {
    let mac = |r: u32, c: u32| {
        Instruction::new("mac")
            .reads([reg(r, c, "x"), reg(r, c, "w0"), reg(r, c, "acc")])
            .writes([reg(r, c, "acc")])
    };
    let mul = |r: u32, c: u32| {
        Instruction::new("mul").reads([reg(r, c, "x"), reg(r, c, "w0")]).writes([reg(r, c, "acc")])
    };
    vec![
        Instruction::new("store").reads([reg(1, 1, "acc")]).stores(DATA_MEMORY, C + 2 * i + 1, 1),
        mul(0, 0),
        mul(1, 0),
        Instruction::new("load").writes([reg(1, 0, "x")]).loads(DATA_MEMORY, B + i, 1),
        Instruction::new("load").writes([reg(1, 0, "w0")]).loads(DATA_MEMORY, A + i, 1),
        mac(1, 0),
        Instruction::new("move").reads([reg(0, 0, "x")]).writes([reg(1, 0, "x")]),
        mac(1, 0),
        Instruction::new("store").reads([reg(1, 0, "acc")]).stores(DATA_MEMORY, C + 2 * i, 1),
    ]
}

/// `iterations` consecutive iterations of [`elementwise_iteration`].
pub fn elementwise_stream(iterations: u64) -> Vec<Instruction> {
    (0..iterations).flat_map(elementwise_iteration).collect()
}

/// The same loop as a kernel with `k` iterations.
pub fn elementwise_kernel(k: u64) -> LoopKernel {
    let op = |name: &str, base, extent, stride| Operand {
        name: name.into(),
        memory: DATA_MEMORY.into(),
        base,
        extent,
        stride,
    };
    LoopKernel {
        name: "elementwise_mac".into(),
        instructions: elementwise_iteration(0),
        k,
        operands: vec![op("A", A, 1, 1), op("B", B, 1, 1), op("C", C, 2, 2)],
    }
}

/// A front-end bound pipeline and a seven-instruction loop of four
/// iterations. The first iteration spans 8 cycles, later ones span 9 and
/// overlap their predecessor by 2, so the loop takes 29 cycles.
pub fn overlap_example() -> (ArchitectureModel, LoopKernel) {
    let c = LatencyExpr::constant;
    let objects = vec![
        HardwareObject::Memory {
            name: "instructionMemory".into(),
            address_ranges: vec![[0, 1 << 16]],
            data_width: 32,
            port_width: 1,
            read_latency: c(1),
            write_latency: c(1),
            max_concurrent_requests: 1,
        },
        HardwareObject::InstructionMemoryAccessUnit { name: "instructionMemoryAccessUnit".into(), latency: c(0) },
        HardwareObject::InstructionFetchStage {
            name: "instructionFetchStage".into(),
            latency: c(0),
            issue_buffer_size: 1,
        },
        HardwareObject::ExecuteStage { name: "executeStage".into(), latency: c(0) },
        HardwareObject::FunctionalUnit { name: "alu".into(), latency: c(1), to_process: vec!["add".into()] },
    ];
    let doc = ModelDocument {
        name: "front_end_bound".into(),
        objects,
        forward: vec![("instructionFetchStage".into(), "executeStage".into())],
        contains: BTreeMap::from([("executeStage".into(), vec!["alu".into()])]),
        reads: vec![("instructionMemoryAccessUnit".into(), "instructionMemory".into())],
        writes: vec![],
        instruction_memory: "instructionMemory".into(),
        fetch_stage: "instructionFetchStage".into(),
    };
    let m = ArchitectureModel::from_document(doc).expect("fixture model is well linked");
    let kernel = LoopKernel {
        name: "overlap_example".into(),
        instructions: vec![Instruction::new("add"); 7],
        k: 4,
        operands: vec![],
    };
    (m, kernel)
}

/// Keyword-spotting style 1D network: temporal convolutions with strided
/// shortcut convolutions, the element-wise layers between them and a final
/// classifier. 21 layers.
pub fn layer_suite() -> Vec<LayerSpec> {
    use LayerKind::{Add, Clip, Mul, Relu};
    let conv = LayerSpec::conv1d;
    vec![
        conv(40, 16, 101, 3),
        LayerSpec::elementwise(Relu, 16, 101),
        conv(16, 24, 101, 9).with_stride(2).with_padding(true),
        LayerSpec::elementwise(Relu, 24, 51),
        conv(24, 24, 51, 9).with_padding(true),
        conv(16, 24, 101, 1).with_stride(2),
        LayerSpec::elementwise(Add, 24, 51),
        LayerSpec::elementwise(Relu, 24, 51),
        conv(24, 32, 51, 9).with_stride(2).with_padding(true),
        LayerSpec::elementwise(Clip, 32, 26),
        conv(32, 32, 26, 9).with_padding(true),
        conv(24, 32, 51, 1).with_stride(2),
        LayerSpec::elementwise(Add, 32, 26),
        LayerSpec::elementwise(Relu, 32, 26),
        conv(32, 48, 26, 9).with_stride(2).with_padding(true),
        LayerSpec::elementwise(Relu, 48, 13),
        conv(48, 48, 13, 9).with_padding(true),
        conv(32, 48, 26, 1).with_stride(2),
        LayerSpec::elementwise(Add, 48, 13),
        LayerSpec::elementwise(Mul, 48, 13),
        LayerSpec::fully_connected(48, 12),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aidg::build_aidg;
    use crate::estimator::{estimate_kernel, EstimatorConfig, Method, Mode};
    use crate::eval::{aidg_latency, evaluate};

    #[test]
    fn two_iterations_take_59_cycles() {
        let m = reference_array();
        let g = build_aidg(&m, &elementwise_stream(2)).unwrap();
        assert_eq!(g.len(), 66);
        let r = evaluate(&g, m.issue_buffer_size(), None).unwrap();
        assert_eq!((r.t_enter[63], r.t_leave[63]), (29, 31));
        assert_eq!((r.t_enter[64], r.t_leave[64]), (31, 55));
        assert_eq!(r.t_leave[65], 59);
        assert_eq!(aidg_latency(&r), Ok(59));
    }

    #[test]
    fn overlap_example_spans() {
        let (m, kernel) = overlap_example();
        let series = crate::estimator::iteration_series(&m, &kernel).unwrap();
        assert_eq!(series, [(8, 0), (9, 2), (9, 2), (9, 2)]);
        let g = build_aidg(&m, &kernel.stream(4)).unwrap();
        assert_eq!(aidg_latency(&evaluate(&g, 1, None).unwrap()), Ok(29));
        let cfg = EstimatorConfig::with_mode(Mode::FixedPoint);
        let e = estimate_kernel(&m, &kernel, &cfg).unwrap();
        assert_eq!((e.method, e.k_prolog, e.k_stop, e.delta_t_prolog), (Method::FixedPoint, 2, 3, 15));
        assert_eq!((e.delta_t_iteration, e.delta_t_overlap, e.delta_t_hat), (9, 2, 29));
    }

    #[test]
    fn kernel_reproduces_stream() {
        assert_eq!(elementwise_kernel(3).stream(3), elementwise_stream(3));
    }
}
