#![allow(dead_code)]

use aidg_perf::expr::LatencyExpr;
use aidg_perf::model::systolic::{
    generate_systolic_array, has_load_unit, reg, SystolicConfig, SystolicLatencies, DATA_MEMORY,
};
use aidg_perf::model::{ArchitectureModel, Instruction};
use rand::seq::SliceRandom;
use rand::Rng;

pub struct Array {
    pub cfg: SystolicConfig,
    pub model: ArchitectureModel,
}

fn latency(rng: &mut impl Rng, word_dependent: bool) -> LatencyExpr {
    if word_dependent && rng.gen_bool(0.3) {
        LatencyExpr::parse(&format!("{} + num_words", rng.gen_range(0..4))).unwrap()
    } else {
        LatencyExpr::constant(rng.gen_range(0..6))
    }
}

/// A systolic array of at most `max`×`max` PEs with random widths and
/// latencies.
pub fn random_array(rng: &mut impl Rng, max: u32) -> Array {
    let mut cfg = SystolicConfig::new(rng.gen_range(1..=max), rng.gen_range(1..=max), rng.gen_range(1..=4));
    cfg.instruction_port_width = rng.gen_range(1..=4);
    cfg.issue_buffer_size = rng.gen_range(1..=3);
    cfg.latencies = SystolicLatencies {
        instruction_access: latency(rng, false),
        instruction_read: latency(rng, true),
        fetch: latency(rng, false),
        load_unit: latency(rng, false),
        store_unit: latency(rng, false),
        processing_element: latency(rng, false),
        data_read: latency(rng, true),
        data_write: latency(rng, true),
    };
    let model = generate_systolic_array(&cfg);
    Array { cfg, model }
}

fn own_regs(cfg: &SystolicConfig, r: u32, c: u32) -> Vec<String> {
    let mut v = vec![reg(r, c, "x"), reg(r, c, "acc"), reg(r, c, "out")];
    v.extend((0..cfg.rows).map(|i| reg(r, c, &format!("w{i}"))));
    v
}

/// One instruction that routes on the array.
pub fn random_instruction(rng: &mut impl Rng, cfg: &SystolicConfig) -> Instruction {
    let (rows, cols) = (cfg.rows, cfg.cols);
    let addr = rng.gen_range(0..24u64);
    match rng.gen_range(0..10) {
        0..=2 => {
            let (r, c) = loop {
                let (r, c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
                if has_load_unit(r, c) {
                    break (r, c);
                }
            };
            let n = rng.gen_range(1..=cfg.mem_port_width as usize);
            let regs: Vec<String> = own_regs(cfg, r, c).choose_multiple(rng, n).cloned().collect();
            let words = regs.len() as u32;
            Instruction::new("load").writes(regs).loads(DATA_MEMORY, addr, words)
        }
        3..=4 => {
            let c = rng.gen_range(0..cols);
            let src = own_regs(cfg, rows - 1, c).choose(rng).unwrap().clone();
            Instruction::new("store").reads([src]).stores(DATA_MEMORY, addr, 1)
        }
        _ => {
            let (r, c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
            let own = own_regs(cfg, r, c);
            let n = rng.gen_range(1..=3);
            let reads: Vec<String> = own.choose_multiple(rng, n).cloned().collect();
            let mut targets = vec![(r, c)];
            if c + 1 < cols {
                targets.push((r, c + 1));
            }
            if r + 1 < rows {
                targets.push((r + 1, c));
            }
            let &(tr, tc) = targets.choose(rng).unwrap();
            let dst = own_regs(cfg, tr, tc).choose(rng).unwrap().clone();
            let op = *["mac", "mul", "add", "move", "max", "min"].choose(rng).unwrap();
            Instruction::new(op).reads(reads).writes([dst])
        }
    }
}

pub fn random_stream(rng: &mut impl Rng, cfg: &SystolicConfig, len: usize) -> Vec<Instruction> {
    (0..len).map(|_| random_instruction(rng, cfg)).collect()
}
