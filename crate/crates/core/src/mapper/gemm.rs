use serde::{Deserialize, Serialize};

use super::{LayerKind, LayerSpec, LoopKernel, MapError, Operand};
use crate::model::Instruction;

/// Matrix product `[M×K]·[K×N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmDims {
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

/// Matrix dimensions of a convolution after im2col.
pub fn im2col_dims(layer: &LayerSpec) -> Result<GemmDims, MapError> {
    layer.validate()?;
    match layer.kind {
        LayerKind::Conv1d | LayerKind::Conv2d | LayerKind::FullyConnected => Ok(GemmDims {
            m: layer.out_spatial(),
            k: u64::from(layer.c) * layer.taps(),
            n: u64::from(layer.out_channels()),
        }),
        other => Err(MapError::Unsupported(other.name())),
    }
}

const MAIN_MEMORY: &str = "mainMemory";

/// One iteration per (row tile, column tile, reduction tile).
pub fn tile_gemm(d: GemmDims, tile: u32) -> LoopKernel {
    let t = u64::from(tile.max(1));
    let words = (t * t) as u32;
    let area = t * t;
    let (a, b, c) = (0, 1 << 40, 2 << 40);
    let ext = |i: Instruction| i.imm("tile", i64::from(tile)).imm("rows", t as i64).imm("cols", t as i64);
    let instructions = vec![
        ext(Instruction::new("mvin_tile").writes(["tileA"]).loads(MAIN_MEMORY, a, words)),
        ext(Instruction::new("mvin_tile").writes(["tileB"]).loads(MAIN_MEMORY, b, words)),
        ext(Instruction::new("preload_tile").reads(["tileB"]).writes(["tileW"])),
        ext(Instruction::new("compute_tile").reads(["tileA", "tileW", "tileC"]).writes(["tileC"])),
        ext(Instruction::new("mvout_tile").reads(["tileC"]).stores(MAIN_MEMORY, c, words)),
    ];
    let k = d.m.div_ceil(t) * d.n.div_ceil(t) * d.k.div_ceil(t);
    let op = |name: &str, base| Operand { name: name.into(), memory: MAIN_MEMORY.into(), base, extent: area, stride: area };
    LoopKernel { name: "gemm".into(), instructions, k, operands: vec![op("A", a), op("B", b), op("C", c)] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::{gemm_tile_model, TileLatencies};

    #[test]
    fn conv2d_im2col() {
        let l = LayerSpec::conv2d(3, 16, 32, 32, 3, 3).with_padding(true);
        assert_eq!(im2col_dims(&l).unwrap(), GemmDims { m: 1024, k: 27, n: 16 });
    }

    #[test]
    fn pooling_has_no_gemm_form() {
        let mut l = LayerSpec::new(LayerKind::MaxPool, 4);
        l.c_w = 4;
        l.f = Some(2);
        assert!(im2col_dims(&l).is_err());
    }

    #[test]
    fn tiled_kernel_routes() {
        let m = gemm_tile_model(16, &TileLatencies::default());
        let kern = tile_gemm(GemmDims { m: 1024, k: 27, n: 16 }, 16);
        assert_eq!(kern.k, 64 * 2);
        assert!(kern.resolve(&m).is_ok());
    }
}
