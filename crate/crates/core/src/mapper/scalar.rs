//! Weight-stationary lowering onto systolic arrays.
//!
//! Convolutions unroll input channels over rows and output channels over
//! columns. Weights enter through the top row and are shifted down, inputs
//! enter through the left column and are shifted right, partial sums flow
//! down the rows and leave through the store units of the bottom row. One
//! loop iteration covers one (channel tile, output position, filter tap).
//! Depthwise, pooling and element-wise layers use one lane per column.

use super::{LayerKind, LayerSpec, LoopKernel, MapError, Operand};
use crate::model::systolic::{load_unit_name, reg, SystolicLayout, DATA_MEMORY};
use crate::model::{ArchitectureModel, Instruction};

const BASE_W: u64 = 0;
const BASE_X: u64 = 1 << 36;
const BASE_Y: u64 = 2 << 36;

/// Channels processed in parallel for a dimension of `dim` on `lanes` lanes.
///
/// The largest divisor of `dim` not above `lanes`. When only 1 divides, the
/// lanes are filled anyway and the last tile runs with idle lanes.
pub fn unroll_factor(dim: u32, lanes: u32) -> u32 {
    let best = divisor_factor(dim, lanes);
    if best == 1 {
        dim.min(lanes).max(1)
    } else {
        best
    }
}

fn divisor_factor(dim: u32, lanes: u32) -> u32 {
    (1..=lanes.min(dim)).rev().find(|&d| dim.is_multiple_of(d)).unwrap_or(1)
}

struct Emitter {
    rows: u32,
    out: Vec<Instruction>,
}

impl Emitter {
    fn op(&mut self, i: Instruction) {
        self.out.push(i);
    }

    fn load(&mut self, regs: Vec<String>, address: u64) {
        let words = regs.len() as u32;
        self.op(Instruction::new("load").writes(regs).loads(DATA_MEMORY, address, words));
    }

    /// Move a value in row 0 of column `c` to the bottom row and store it.
    fn drain(&mut self, c: u32, src: &str, address: u64) {
        let mut at = reg(0, c, src);
        for r in 0..self.rows - 1 {
            let next = reg(r + 1, c, "out");
            self.op(Instruction::new("move").reads([at]).writes([next.clone()]));
            at = next;
        }
        self.op(Instruction::new("store").reads([at]).stores(DATA_MEMORY, address, 1));
    }
}

fn fused_ops(e: &mut Emitter, fused: Option<&str>, r: u32, c: u32) -> Result<(), MapError> {
    let o = reg(r, c, "out");
    match fused {
        None => {}
        Some("relu") => e.op(Instruction::new("max").reads([o.clone()]).writes([o])),
        Some("clip") => {
            e.op(Instruction::new("max").reads([o.clone()]).writes([o.clone()]));
            e.op(Instruction::new("min").reads([o.clone()]).writes([o]));
        }
        Some(other) => return Err(MapError::UnsupportedFusion(other.into())),
    }
    Ok(())
}

fn operand(name: &str, base: u64, extent: u64) -> Operand {
    Operand { name: name.into(), memory: DATA_MEMORY.into(), base, extent, stride: extent }
}

/// Lower a layer onto a model produced by the systolic generator.
pub fn map_scalar(layer: &LayerSpec, m: &ArchitectureModel) -> Result<LoopKernel, MapError> {
    layer.validate()?;
    let lay = SystolicLayout::detect(m).ok_or(MapError::NotSystolic)?;
    if m.id(&load_unit_name(0, 0)).is_none() {
        return Err(MapError::NotSystolic);
    }
    let (rows, cols) = (lay.rows, lay.cols);
    let mut e = Emitter { rows, out: Vec::new() };
    let fused = layer.fused.as_deref();
    let name = layer.kind.name().to_string();
    let kernel = match layer.kind {
        LayerKind::Conv1d | LayerKind::Conv2d | LayerKind::FullyConnected => {
            let kk = layer.out_channels();
            let uc = unroll_factor(layer.c, rows);
            let uk = unroll_factor(kk, cols);
            let p = lay.mem_port_width.max(1);
            for c in 0..uk {
                let mut row = 0;
                while row < uc {
                    let n = p.min(uc - row);
                    let regs = (row..row + n).map(|w| reg(0, c, &format!("w{w}"))).collect();
                    e.load(regs, BASE_W + u64::from(c * uc + row));
                    row += n;
                }
            }
            for r in 0..uc {
                e.load(vec![reg(r, 0, "x")], BASE_X + u64::from(r));
            }
            for r in 0..uc {
                for c in 0..uk {
                    if r + 1 < uc {
                        let ws: Vec<String> = (r + 1..uc).map(|w| format!("w{w}")).collect();
                        e.op(Instruction::new("move")
                            .reads(ws.iter().map(|w| reg(r, c, w)))
                            .writes(ws.iter().map(|w| reg(r + 1, c, w))));
                    }
                    if c + 1 < uk {
                        e.op(Instruction::new("move").reads([reg(r, c, "x")]).writes([reg(r, c + 1, "x")]));
                    }
                    let mut reads = vec![reg(r, c, "x"), reg(r, c, &format!("w{r}"))];
                    if r > 0 {
                        reads.push(reg(r, c, "acc"));
                    }
                    let dst = if r + 1 < uc { reg(r + 1, c, "acc") } else { reg(r, c, "out") };
                    e.op(Instruction::new("mac").reads(reads).writes([dst]));
                }
            }
            for c in 0..uk {
                for r in uc - 1..rows - 1 {
                    e.op(Instruction::new("move").reads([reg(r, c, "out")]).writes([reg(r + 1, c, "out")]));
                }
                fused_ops(&mut e, fused, rows - 1, c)?;
                e.op(Instruction::new("store")
                    .reads([reg(rows - 1, c, "out")])
                    .stores(DATA_MEMORY, BASE_Y + u64::from(c), 1));
            }
            let tiles = u64::from(layer.c.div_ceil(uc)) * u64::from(kk.div_ceil(uk));
            LoopKernel {
                name,
                instructions: e.out,
                k: tiles * layer.out_spatial() * layer.taps(),
                operands: vec![
                    operand("W", BASE_W, u64::from(uc * uk)),
                    operand("X", BASE_X, u64::from(uc)),
                    operand("Y", BASE_Y, u64::from(uk)),
                ],
            }
        }
        LayerKind::DepthwiseConv2d | LayerKind::AvgPool | LayerKind::MaxPool => {
            let u = unroll_factor(layer.c, cols);
            for c in 0..u {
                let x = reg(0, c, "x");
                let acc = reg(0, c, "acc");
                if layer.kind == LayerKind::DepthwiseConv2d {
                    e.load(vec![reg(0, c, "w0")], BASE_W + u64::from(c));
                }
                e.load(vec![x.clone()], BASE_X + u64::from(c));
                let op = match layer.kind {
                    LayerKind::DepthwiseConv2d => Instruction::new("mac").reads([x, reg(0, c, "w0"), acc.clone()]),
                    LayerKind::AvgPool => Instruction::new("add").reads([x, acc.clone()]),
                    _ => Instruction::new("max").reads([x, acc.clone()]),
                };
                e.op(op.writes([acc]));
                if fused.is_some() {
                    e.op(Instruction::new("move").reads([reg(0, c, "acc")]).writes([reg(0, c, "out")]));
                    fused_ops(&mut e, fused, 0, c)?;
                    e.drain(c, "out", BASE_Y + u64::from(c));
                } else {
                    e.drain(c, "acc", BASE_Y + u64::from(c));
                }
            }
            let tiles = u64::from(layer.c.div_ceil(u));
            let mut operands = vec![operand("X", BASE_X, u64::from(u)), operand("Y", BASE_Y, u64::from(u))];
            if layer.kind == LayerKind::DepthwiseConv2d {
                operands.insert(0, operand("W", BASE_W, u64::from(u)));
            }
            LoopKernel { name, instructions: e.out, k: tiles * layer.out_spatial() * layer.taps(), operands }
        }
        LayerKind::Relu | LayerKind::Clip | LayerKind::Add | LayerKind::Mul => {
            let u = divisor_factor(layer.c, cols);
            for c in 0..u {
                let x = reg(0, c, "x");
                e.load(vec![x.clone()], BASE_X + u64::from(c));
                if matches!(layer.kind, LayerKind::Add | LayerKind::Mul) {
                    e.load(vec![reg(0, c, "w0")], BASE_W + u64::from(c));
                }
                let out = reg(0, c, "out");
                match layer.kind {
                    LayerKind::Relu => e.op(Instruction::new("max").reads([x]).writes([out])),
                    LayerKind::Clip => {
                        e.op(Instruction::new("max").reads([x]).writes([out.clone()]));
                        e.op(Instruction::new("min").reads([out.clone()]).writes([out]));
                    }
                    LayerKind::Add => e.op(Instruction::new("add").reads([x, reg(0, c, "w0")]).writes([out])),
                    _ => e.op(Instruction::new("mul").reads([x, reg(0, c, "w0")]).writes([out])),
                }
                fused_ops(&mut e, fused, 0, c)?;
                e.drain(c, "out", BASE_Y + u64::from(c));
            }
            let mut operands = vec![operand("X", BASE_X, u64::from(u)), operand("Y", BASE_Y, u64::from(u))];
            if matches!(layer.kind, LayerKind::Add | LayerKind::Mul) {
                operands.insert(0, operand("W", BASE_W, u64::from(u)));
            }
            let elements = u64::from(layer.c / u) * layer.out_spatial();
            LoopKernel { name, instructions: e.out, k: elements, operands }
        }
    };
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::systolic::{generate_systolic_array, SystolicConfig};
    use proptest::prelude::*;

    fn array(r: u32, c: u32, p: u32) -> ArchitectureModel {
        generate_systolic_array(&SystolicConfig::new(r, c, p))
    }

    fn ops(k: &LoopKernel) -> Vec<&str> {
        k.instructions.iter().map(|i| i.operation.as_str()).collect()
    }

    #[test]
    fn unroll_prefers_divisors() {
        assert_eq!(unroll_factor(16, 12), 8);
        assert_eq!(unroll_factor(24, 12), 12);
        assert_eq!(unroll_factor(6, 4), 3);
        assert_eq!(unroll_factor(13, 12), 12);
        assert_eq!(unroll_factor(1, 12), 1);
        assert_eq!(unroll_factor(5, 1), 1);
    }

    #[test]
    fn pointwise_conv_on_single_pe() {
        let m = array(1, 1, 1);
        let k = map_scalar(&LayerSpec::conv1d(1, 1, 1, 1), &m).unwrap();
        assert_eq!(ops(&k), ["load", "load", "mac", "store"]);
        assert_eq!(k.k, 1);
    }

    #[test]
    fn two_by_two_conv_kernel() {
        let m = array(2, 2, 2);
        let k = map_scalar(&LayerSpec::conv1d(2, 2, 8, 3), &m).unwrap();
        assert_eq!(k.count_operation("mac"), 4);
        assert_eq!(k.count_operation("load"), 4);
        assert_eq!(k.count_operation("store"), 2);
        assert_eq!(k.k, 6 * 3);
        assert!(k.resolve(&m).is_ok());
    }

    #[test]
    fn elementwise_uses_one_lane_when_indivisible() {
        let m = array(2, 2, 2);
        let k = map_scalar(&LayerSpec::elementwise(LayerKind::Add, 7, 3), &m).unwrap();
        assert_eq!(ops(&k), ["load", "load", "add", "move", "store"]);
        assert_eq!(k.k, 21);
    }

    #[test]
    fn elementwise_multiply_shape() {
        let m = array(1, 1, 1);
        let k = map_scalar(&LayerSpec::elementwise(LayerKind::Mul, 4, 1), &m).unwrap();
        assert_eq!(ops(&k), ["load", "load", "mul", "store"]);
        assert_eq!(k.k, 4);
    }

    #[test]
    fn unknown_fusion_rejected() {
        let m = array(2, 2, 2);
        let mut l = LayerSpec::conv1d(2, 2, 4, 1);
        l.fused = Some("softmax".into());
        assert_eq!(map_scalar(&l, &m), Err(MapError::UnsupportedFusion("softmax".into())));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conv_macs_are_conserved(
            r in 1u32..6, c in 1u32..6, p in 1u32..4,
            cin in 1u32..20, kout in 1u32..20, w in 1u32..12, f in 1u32..4,
        ) {
            prop_assume!(f <= w);
            let m = array(r, c, p);
            let layer = LayerSpec::conv1d(cin, kout, w, f);
            let kern = map_scalar(&layer, &m).unwrap();
            let per_iter = kern.count_operation("mac") as u64;
            let lanes = kern.k * per_iter;
            let macs = layer.analytic_macs().unwrap();
            let uc = unroll_factor(cin, r);
            let uk = unroll_factor(kout, c);
            if cin % uc == 0 && kout % uk == 0 {
                prop_assert_eq!(lanes, macs);
            } else {
                prop_assert!(lanes >= macs);
            }
            prop_assert!(kern.resolve(&m).is_ok());
            for i in &kern.instructions {
                for a in i.read_addresses.iter().chain(&i.write_addresses) {
                    prop_assert!(a.words <= p);
                }
            }
        }
    }
}
