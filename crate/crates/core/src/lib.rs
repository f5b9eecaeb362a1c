//! Cycle latency estimation for DNN layers on abstractly modeled accelerators.
//!
//! An [`ArchitectureModel`](model::ArchitectureModel) describes the hardware as
//! pipeline stages, functional units, register files and memories. A
//! [`LoopKernel`](mapper::LoopKernel) is the instruction sequence of one loop
//! iteration of a layer. The [`aidg`] module turns an instruction stream into
//! a dependency graph of (instruction, object) occupancy nodes and [`eval`]
//! assigns enter and leave cycles to every node. The [`estimator`] evaluates
//! only a short prefix of a layer's iterations and extrapolates once the
//! latency per iteration has settled.
//!
//! # Running Examples
//!
//! The `examples/` directory holds one program per capability:
//!
//! ```text
//! cargo run --example worked_example
//! cargo run --example latency_expressions
//! cargo run --example systolic_generator
//! cargo run --example map_layers
//! cargo run --example estimate_layer
//! cargo run --example port_width_sweep
//! cargo run --example tensor_level
//! cargo run --example diagnostics
//! cargo run --example export_graph
//! ```

pub mod aidg;
pub mod cli;
pub mod estimator;
pub mod eval;
pub mod expr;
pub mod fixtures;
pub mod mapper;
pub mod model;
pub mod oracle;

pub mod prelude {
    pub use crate::aidg::{build_aidg, export_dot, Aidg, AidgBuilder};
    pub use crate::estimator::{
        estimate_layer, estimate_network, EstimatorConfig, LayerEstimate, Method, Mode, NetworkEstimate,
    };
    pub use crate::eval::{aidg_latency, evaluate, EvalResult};
    pub use crate::expr::LatencyExpr;
    pub use crate::mapper::{LayerKind, LayerSpec, LoopKernel};
    pub use crate::model::systolic::{generate_systolic_array, SystolicConfig};
    pub use crate::model::{validate_model, ArchitectureModel, Instruction};
}
