//! From DNN layers to loop kernels.
//!
//! A layer becomes one [`LoopKernel`]: the instructions of a single loop
//! iteration plus the number of iterations `k`. Iterations differ only in
//! their memory addresses, which move by a fixed stride per operand.

mod conv_ext;
mod gemm;
mod scalar;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArchitectureModel, Instruction, ResolvedInstruction, RouteError};

pub use conv_ext::map_conv_ext;
pub use gemm::{im2col_dims, tile_gemm, GemmDims};
pub use scalar::{map_scalar, unroll_factor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    Conv2d,
    DepthwiseConv2d,
    FullyConnected,
    AvgPool,
    MaxPool,
    Relu,
    Clip,
    Add,
    Mul,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Conv2d => "conv2d",
            LayerKind::DepthwiseConv2d => "depthwise_conv2d",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::AvgPool => "avg_pool",
            LayerKind::MaxPool => "max_pool",
            LayerKind::Relu => "relu",
            LayerKind::Clip => "clip",
            LayerKind::Add => "add",
            LayerKind::Mul => "mul",
        }
    }

    fn needs_k(self) -> bool {
        matches!(self, LayerKind::Conv1d | LayerKind::Conv2d | LayerKind::FullyConnected)
    }

    fn has_filter(self) -> bool {
        matches!(
            self,
            LayerKind::Conv1d
                | LayerKind::Conv2d
                | LayerKind::DepthwiseConv2d
                | LayerKind::AvgPool
                | LayerKind::MaxPool
        )
    }

    pub fn is_elementwise(self) -> bool {
        matches!(self, LayerKind::Relu | LayerKind::Clip | LayerKind::Add | LayerKind::Mul)
    }
}

/// One layer of a network document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(rename = "C")]
    pub c: u32,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(rename = "C_w", default = "one")]
    pub c_w: u32,
    #[serde(rename = "C_h", default, skip_serializing_if = "Option::is_none")]
    pub c_h: Option<u32>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<u32>,
    #[serde(rename = "F_h", default, skip_serializing_if = "Option::is_none")]
    pub f_h: Option<u32>,
    #[serde(default = "one")]
    pub s: u32,
    #[serde(default)]
    pub p_pad: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<String>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("layer kind `{0}` is not supported by this mapping")]
    Unsupported(&'static str),
    #[error("unsupported fusion `{0}`")]
    UnsupportedFusion(String),
    #[error("model is not a systolic array")]
    NotSystolic,
    #[error("layer {index}: {source}")]
    Layer { index: usize, source: Box<MapError> },
    #[error("network document: {0}")]
    Document(String),
}

impl LayerSpec {
    pub fn new(kind: LayerKind, c: u32) -> Self {
        LayerSpec { kind, c, k: None, c_w: 1, c_h: None, f: None, f_h: None, s: 1, p_pad: false, fused: None }
    }

    pub fn conv1d(c: u32, k: u32, c_w: u32, f: u32) -> Self {
        LayerSpec { k: Some(k), c_w, f: Some(f), ..Self::new(LayerKind::Conv1d, c) }
    }

    pub fn conv2d(c: u32, k: u32, c_h: u32, c_w: u32, f_h: u32, f: u32) -> Self {
        LayerSpec {
            k: Some(k),
            c_w,
            c_h: Some(c_h),
            f: Some(f),
            f_h: Some(f_h),
            ..Self::new(LayerKind::Conv2d, c)
        }
    }

    pub fn fully_connected(c: u32, k: u32) -> Self {
        LayerSpec { k: Some(k), ..Self::new(LayerKind::FullyConnected, c) }
    }

    pub fn elementwise(kind: LayerKind, c: u32, c_w: u32) -> Self {
        LayerSpec { c_w, ..Self::new(kind, c) }
    }

    pub fn with_stride(mut self, s: u32) -> Self {
        self.s = s;
        self
    }

    pub fn with_padding(mut self, p: bool) -> Self {
        self.p_pad = p;
        self
    }

    pub fn out_channels(&self) -> u32 {
        match self.kind {
            k if k.needs_k() => self.k.unwrap_or(1),
            _ => self.c,
        }
    }

    pub fn filter_w(&self) -> u32 {
        if self.kind.has_filter() {
            self.f.unwrap_or(1)
        } else {
            1
        }
    }

    pub fn filter_h(&self) -> u32 {
        if self.kind.has_filter() && self.c_h.is_some() {
            self.f_h.or(self.f).unwrap_or(1)
        } else {
            1
        }
    }

    pub fn in_h(&self) -> u32 {
        self.c_h.unwrap_or(1)
    }

    fn out_dim(&self, input: u32, filter: u32) -> u32 {
        let pad = if self.p_pad { filter / 2 } else { 0 };
        (input + 2 * pad - filter) / self.s + 1
    }

    pub fn out_w(&self) -> u32 {
        match self.kind {
            LayerKind::FullyConnected => 1,
            k if k.is_elementwise() => self.c_w,
            _ => self.out_dim(self.c_w, self.filter_w()),
        }
    }

    pub fn out_h(&self) -> u32 {
        match self.kind {
            LayerKind::FullyConnected => 1,
            k if k.is_elementwise() => self.in_h(),
            _ => self.out_dim(self.in_h(), self.filter_h()),
        }
    }

    pub fn out_spatial(&self) -> u64 {
        u64::from(self.out_w()) * u64::from(self.out_h())
    }

    pub fn taps(&self) -> u64 {
        match self.kind {
            LayerKind::FullyConnected => 1,
            _ => u64::from(self.filter_w()) * u64::from(self.filter_h()),
        }
    }

    /// Multiply-accumulate count of conv, depthwise and fully connected layers.
    pub fn analytic_macs(&self) -> Option<u64> {
        let c = u64::from(self.c);
        match self.kind {
            LayerKind::Conv1d | LayerKind::Conv2d | LayerKind::FullyConnected => {
                Some(c * u64::from(self.out_channels()) * self.out_spatial() * self.taps())
            }
            LayerKind::DepthwiseConv2d => Some(c * self.out_spatial() * self.taps()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let bad = |m: String| Err(MapError::InvalidLayer(m));
        if self.c == 0 || self.c_w == 0 || self.s == 0 {
            return bad("C, C_w and s must be at least 1".into());
        }
        if self.c_h == Some(0) || self.f == Some(0) || self.f_h == Some(0) || self.k == Some(0) {
            return bad("dimensions must be at least 1".into());
        }
        if self.kind.needs_k() && self.k.is_none() {
            return bad(format!("{} needs K", self.kind.name()));
        }
        if self.kind == LayerKind::DepthwiseConv2d && self.k.is_some_and(|k| k != self.c) {
            return bad("depthwise_conv2d needs K equal to C".into());
        }
        if matches!(self.kind, LayerKind::Conv2d | LayerKind::DepthwiseConv2d) && self.c_h.is_none() {
            return bad(format!("{} needs C_h", self.kind.name()));
        }
        if self.kind.has_filter() {
            for (input, filter, axis) in
                [(self.c_w, self.filter_w(), "width"), (self.in_h(), self.filter_h(), "height")]
            {
                let pad = if self.p_pad { filter / 2 } else { 0 };
                if filter > input + 2 * pad {
                    return bad(format!("filter {axis} {filter} exceeds padded input {}", input + 2 * pad));
                }
            }
        }
        Ok(())
    }
}

/// Parse and validate a network document: a JSON array of layers.
pub fn parse_network(text: &str) -> Result<Vec<LayerSpec>, MapError> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| MapError::Document(e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(index, v)| {
            let spec: LayerSpec = serde_json::from_value(v).map_err(|e| MapError::Layer {
                index,
                source: Box::new(MapError::Document(e.to_string())),
            })?;
            spec.validate().map_err(|e| MapError::Layer { index, source: Box::new(e) })?;
            Ok(spec)
        })
        .collect()
}

/// A dense operand region. Addresses inside `[base, base + extent)` move by
/// `stride` words per iteration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operand {
    pub name: String,
    pub memory: String,
    pub base: u64,
    pub extent: u64,
    pub stride: u64,
}

/// The instructions of one loop iteration and the iteration count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopKernel {
    #[serde(default)]
    pub name: String,
    pub instructions: Vec<Instruction>,
    pub k: u64,
    #[serde(default)]
    pub operands: Vec<Operand>,
}

const CONTROL_FLOW: [&str; 6] = ["branch", "jump", "jmp", "beq", "bne", "call"];

impl LoopKernel {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.k == 0 {
            return Err(MapError::InvalidLayer("kernel needs k >= 1".into()));
        }
        if self.instructions.is_empty() {
            return Err(MapError::InvalidLayer("kernel has no instructions".into()));
        }
        if let Some(i) = self.instructions.iter().find(|i| CONTROL_FLOW.contains(&i.operation.as_str())) {
            return Err(MapError::InvalidLayer(format!("control flow `{}` in loop kernel", i.operation)));
        }
        Ok(())
    }

    /// Per-iteration stride of an address.
    pub fn stride_of(&self, memory: &str, address: u64) -> u64 {
        self.operands
            .iter()
            .find(|o| o.memory == memory && address >= o.base && address - o.base < o.extent)
            .map_or(0, |o| o.stride)
    }

    /// The instructions of iteration `j`.
    pub fn iteration(&self, j: u64) -> Vec<Instruction> {
        self.instructions
            .iter()
            .map(|i| {
                let mut i = i.clone();
                for a in i.read_addresses.iter_mut().chain(i.write_addresses.iter_mut()) {
                    a.address += j * self.stride_of(&a.memory, a.address);
                }
                i
            })
            .collect()
    }

    /// The first `iterations` iterations as one flat stream.
    pub fn stream(&self, iterations: u64) -> Vec<Instruction> {
        (0..iterations).flat_map(|j| self.iteration(j)).collect()
    }

    /// Route every instruction once; iterations reuse the result.
    pub fn resolve(&self, m: &ArchitectureModel) -> Result<Vec<ResolvedInstruction>, (usize, RouteError)> {
        self.instructions
            .iter()
            .enumerate()
            .map(|(idx, i)| {
                ResolvedInstruction::resolve_with_strides(m, i, &|mem, addr| self.stride_of(mem, addr))
                    .map_err(|e| (idx, e))
            })
            .collect()
    }

    pub fn count_operation(&self, op: &str) -> usize {
        self.instructions.iter().filter(|i| i.operation == op).count()
    }
}

/// How layers are lowered onto a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    /// Pick from the operations the model supports.
    #[default]
    Auto,
    Scalar,
    ConvExt,
    Gemm { tile: u32 },
}

impl Mapping {
    pub fn resolve(self, m: &ArchitectureModel) -> Mapping {
        if self != Mapping::Auto {
            return self;
        }
        let supports = |op: &str| m.objects().iter().any(|o| o.to_process().iter().any(|p| p == op));
        if supports("conv_ext") {
            Mapping::ConvExt
        } else if supports("compute_tile") {
            let tile = m
                .objects()
                .iter()
                .find_map(|o| match o {
                    crate::model::HardwareObject::Memory { port_width, .. }
                        if o.name() != m.object(m.instruction_memory()).name() =>
                    {
                        Some((*port_width as f64).sqrt() as u32)
                    }
                    _ => None,
                })
                .unwrap_or(16)
                .max(1);
            Mapping::Gemm { tile }
        } else {
            Mapping::Scalar
        }
    }
}

/// Lower one layer onto a model.
pub fn map_layer(layer: &LayerSpec, m: &ArchitectureModel, mapping: Mapping) -> Result<LoopKernel, MapError> {
    layer.validate()?;
    match mapping.resolve(m) {
        Mapping::Scalar | Mapping::Auto => map_scalar(layer, m),
        Mapping::ConvExt => map_conv_ext(layer),
        Mapping::Gemm { tile } => Ok(tile_gemm(im2col_dims(layer)?, tile)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_layer() {
        let net = parse_network(r#"[{"kind": "conv1d", "C": 16, "K": 24, "C_w": 101, "F": 3, "s": 1, "p_pad": true}]"#)
            .unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(net[0].out_w(), 101);
        assert_eq!(net[0].analytic_macs(), Some(16 * 24 * 101 * 3));
    }

    #[test]
    fn zero_channels_rejected_with_index() {
        let err = parse_network(r#"[{"kind": "relu", "C": 4}, {"kind": "relu", "C": 0}]"#).unwrap_err();
        assert!(matches!(err, MapError::Layer { index: 1, .. }), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let err = parse_network(r#"[{"kind": "relu", "C": 4, "colour": 1}]"#).unwrap_err();
        assert!(matches!(err, MapError::Layer { index: 0, .. }), "{err}");
    }

    #[test]
    fn output_sizes() {
        let l = LayerSpec::conv2d(3, 16, 34, 34, 3, 3);
        assert_eq!((l.out_h(), l.out_w()), (32, 32));
        let l = LayerSpec::conv1d(1, 1, 9, 3).with_stride(2).with_padding(true);
        assert_eq!(l.out_w(), 5);
    }

    #[test]
    fn kernel_iteration_rewrites_only_operand_addresses() {
        let kernel = LoopKernel {
            name: "t".into(),
            instructions: vec![Instruction::new("load").loads("m", 3, 1).loads("m", 100, 1)],
            k: 4,
            operands: vec![Operand { name: "A".into(), memory: "m".into(), base: 0, extent: 10, stride: 10 }],
        };
        let it = kernel.iteration(2);
        assert_eq!(it[0].read_addresses[0].address, 23);
        assert_eq!(it[0].read_addresses[1].address, 100);
    }

    #[test]
    fn control_flow_rejected() {
        let kernel = LoopKernel { name: String::new(), instructions: vec![Instruction::new("branch")], k: 1, operands: vec![] };
        assert!(kernel.validate().is_err());
    }
}
