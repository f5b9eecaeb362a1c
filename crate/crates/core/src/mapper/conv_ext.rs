use super::{LayerKind, LayerSpec, LoopKernel, MapError};
use crate::model::Instruction;

const FUSIONS: [&str; 4] = ["relu", "clip", "avg_pool", "max_pool"];

/// A single `conv_ext` instruction covering the whole layer.
///
/// Fully connected layers are treated as a 1-wide convolution with a 1-tap
/// filter.
pub fn map_conv_ext(layer: &LayerSpec) -> Result<LoopKernel, MapError> {
    layer.validate()?;
    let (c_w, f) = match layer.kind {
        LayerKind::Conv1d => (layer.c_w, layer.filter_w()),
        LayerKind::FullyConnected => (1, 1),
        other => return Err(MapError::Unsupported(other.name())),
    };
    if let Some(fu) = layer.fused.as_deref().filter(|f| !FUSIONS.contains(f)) {
        return Err(MapError::UnsupportedFusion(fu.into()));
    }
    let i = Instruction::new("conv_ext")
        .imm("C", layer.c.into())
        .imm("C_w", c_w.into())
        .imm("K", layer.out_channels().into())
        .imm("F", f.into())
        .imm("s", layer.s.into())
        .imm("p", i64::from(layer.p_pad));
    Ok(LoopKernel { name: layer.kind.name().into(), instructions: vec![i], k: 1, operands: vec![] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn immediates_carry_layer_shape() {
        let k = map_conv_ext(&LayerSpec::conv1d(16, 24, 101, 9).with_stride(2).with_padding(true)).unwrap();
        assert_eq!(k.k, 1);
        let imm = &k.instructions[0].immediates;
        assert_eq!((imm["C"], imm["C_w"], imm["K"], imm["F"], imm["s"], imm["p"]), (16, 101, 24, 9, 2, 1));
    }

    #[test]
    fn conv2d_is_rejected() {
        let l = LayerSpec::conv2d(3, 8, 8, 8, 3, 3);
        assert_eq!(map_conv_ext(&l), Err(MapError::Unsupported("conv2d")));
    }
}
