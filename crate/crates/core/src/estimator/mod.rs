//! Layer and network latency estimates.
//!
//! A layer's loop is evaluated in blocks of `k_block` iterations, the
//! smallest count whose instructions fill whole fetch blocks. Once two
//! consecutive block-final iterations span the same number of cycles the
//! remaining iterations are extrapolated:
//!
//! ```text
//! Δt̂ = Δt_prolog + (k − k_prolog) · (Δt_iteration − Δt_overlap)
//! ```
//!
//! If the span never settles within a fraction of `k`, the mean progress per
//! iteration between two evaluated points is extrapolated instead.

mod metrics;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aidg::{AidgBuilder, BuildError};
use crate::eval::{aidg_latency, evaluate, EvalError, EvalResult};
use crate::mapper::{map_layer, LayerSpec, LoopKernel, MapError, Mapping};
use crate::model::{ArchitectureModel, ResolvedInstruction, RouteError};

pub use metrics::{
    mape, pearson, percentage_error, sample_variance, variance_diagnostics, Diagnostics, LayerSeries, MetricError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Whole graph for small loops, fixed point otherwise.
    #[default]
    Auto,
    WholeGraph,
    FixedPoint,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Mode::Auto),
            "whole-graph" | "whole_graph" | "whole" => Ok(Mode::WholeGraph),
            "fixed-point" | "fixed_point" => Ok(Mode::FixedPoint),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Whole,
    FixedPoint,
    Fallback,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Whole => "whole",
            Method::FixedPoint => "fixed_point",
            Method::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub mode: Mode,
    /// Share of `k` evaluated before falling back.
    pub fallback_fraction: f64,
    /// The fallback prolog is `k_0.01 / fallback_prolog_divisor` iterations.
    pub fallback_prolog_divisor: u64,
    /// `Mode::Auto` evaluates the whole graph up to this many instructions.
    pub whole_graph_limit: u64,
    /// Keep the per-iteration `(Δt_iteration, Δt_overlap)` series.
    pub keep_history: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            mode: Mode::Auto,
            fallback_fraction: 0.01,
            fallback_prolog_divisor: 4,
            whole_graph_limit: 100_000,
            keep_history: false,
        }
    }
}

impl EstimatorConfig {
    pub fn with_mode(mode: Mode) -> Self {
        EstimatorConfig { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        if !(self.fallback_fraction > 0.0 && self.fallback_fraction <= 1.0) {
            return Err(EstimateError::Config(format!(
                "fallback fraction {} is outside (0, 1]",
                self.fallback_fraction
            )));
        }
        if self.fallback_prolog_divisor < 2 {
            return Err(EstimateError::Config("fallback prolog divisor must be at least 2".into()));
        }
        Ok(())
    }

    /// Iterations evaluated before the fallback applies.
    pub fn fallback_iterations(&self, k: u64) -> u64 {
        (self.fallback_fraction * k as f64).ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimateError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loop kernel: {0}")]
    Kernel(MapError),
    #[error("kernel instruction {index}: {source}")]
    Route { index: usize, source: RouteError },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("layer {index}: {source}")]
    Layer { index: usize, source: Box<EstimateError> },
    #[error("layer {index}: {source}")]
    Map { index: usize, source: MapError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEstimate {
    pub name: String,
    pub delta_t_hat: u64,
    pub method: Method,
    pub k: u64,
    pub k_block: u64,
    pub k_prolog: u64,
    /// Iterations actually evaluated.
    pub k_stop: u64,
    pub delta_t_prolog: u64,
    pub delta_t_iteration: u64,
    pub delta_t_overlap: i64,
    pub instructions_per_iteration: u64,
    pub evaluated_nodes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration_series: Option<Vec<(u64, i64)>>,
    #[serde(skip)]
    pub runtime: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkEstimate {
    pub layers: Vec<LayerEstimate>,
    pub t_hat: u64,
    pub evaluated_iterations: u64,
    pub evaluated_instructions: u64,
    #[serde(skip)]
    pub runtime: Duration,
}

/// `lcm(|I|, p) / |I|`.
pub fn k_block(kernel_len: u64, port_width: u64) -> u64 {
    assert!(kernel_len >= 1 && port_width >= 1);
    port_width / gcd(kernel_len, port_width)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Incremental build and evaluation of a loop, one batch of iterations at a
/// time, with per-iteration bookkeeping.
struct Unrolled<'m> {
    builder: AidgBuilder<'m>,
    resolved: Vec<ResolvedInstruction>,
    result: Option<EvalResult>,
    b_max: u32,
    len: u64,
    iterations: u64,
    /// Latest leave of any non-merged node, per iteration.
    last_leave: Vec<u64>,
    /// Enter of the fetch block that holds the iteration's first instruction.
    first_enter: Vec<u64>,
    min_enter: u64,
    max_leave: u64,
}

impl<'m> Unrolled<'m> {
    fn new(m: &'m ArchitectureModel, kernel: &LoopKernel) -> Result<Self, EstimateError> {
        kernel.validate().map_err(EstimateError::Kernel)?;
        let resolved = kernel.resolve(m).map_err(|(index, source)| EstimateError::Route { index, source })?;
        Ok(Unrolled {
            builder: AidgBuilder::new(m)?,
            resolved,
            result: None,
            b_max: m.issue_buffer_size(),
            len: kernel.len() as u64,
            iterations: 0,
            last_leave: Vec::new(),
            first_enter: Vec::new(),
            min_enter: u64::MAX,
            max_leave: 0,
        })
    }

    fn append(&mut self, n: u64) -> Result<(), EstimateError> {
        let before = self.iterations;
        let total = (before + n).checked_mul(self.len).filter(|&t| t < u64::from(u32::MAX));
        if total.is_none() {
            return Err(BuildError::TooLarge(u32::MAX).into());
        }
        for j in before..before + n {
            for r in &self.resolved {
                self.builder.push_resolved(r, j)?;
            }
        }
        self.iterations += n;
        let prior = self.result.take();
        let done = prior.as_ref().map_or(0, EvalResult::len);
        let g = self.builder.graph();
        let r = evaluate(g, self.b_max, prior)?;
        self.last_leave.resize(self.iterations as usize, 0);
        for (id, node) in g.nodes().iter().enumerate().skip(done) {
            self.min_enter = self.min_enter.min(r.t_enter[id]);
            self.max_leave = self.max_leave.max(r.t_leave[id]);
            if !node.is_merged() {
                let it = (u64::from(node.instr) / self.len) as usize;
                self.last_leave[it] = self.last_leave[it].max(r.t_leave[id]);
            }
        }
        for j in before..self.iterations {
            let block = g.block_of((j * self.len) as u32);
            self.first_enter.push(r.t_enter[block.access as usize]);
        }
        self.result = Some(r);
        Ok(())
    }

    /// Span of iteration `j` (1-based).
    fn span(&self, j: u64) -> u64 {
        let i = (j - 1) as usize;
        self.last_leave[i].saturating_sub(self.first_enter[i])
    }

    /// How far iteration `j - 1` reaches into iteration `j` (1-based).
    fn overlap(&self, j: u64) -> i64 {
        if j < 2 {
            return 0;
        }
        let i = (j - 1) as usize;
        self.last_leave[i - 1] as i64 - self.first_enter[i] as i64
    }

    /// Cycles from the global start to the end of iteration `j` or earlier.
    fn elapsed(&self, j: u64) -> u64 {
        let end = self.last_leave[..j as usize].iter().copied().max().unwrap_or(self.min_enter);
        end.saturating_sub(self.min_enter)
    }

    fn total(&self) -> Result<u64, EstimateError> {
        match &self.result {
            Some(r) => Ok(aidg_latency(r)?),
            None => Err(EvalError::Empty.into()),
        }
    }

    fn nodes(&self) -> u64 {
        self.builder.graph().len() as u64
    }

    fn series(&self) -> Vec<(u64, i64)> {
        (1..=self.iterations).map(|j| (self.span(j), self.overlap(j))).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    name: &str,
    u: &Unrolled,
    cfg: &EstimatorConfig,
    k: u64,
    kb: u64,
    method: Method,
    delta_t_hat: u64,
    (k_prolog, delta_t_prolog, delta_t_iteration, delta_t_overlap): (u64, u64, u64, i64),
    started: Instant,
) -> LayerEstimate {
    LayerEstimate {
        name: name.to_string(),
        delta_t_hat,
        method,
        k,
        k_block: kb,
        k_prolog,
        k_stop: u.iterations,
        delta_t_prolog,
        delta_t_iteration,
        delta_t_overlap,
        instructions_per_iteration: u.len,
        evaluated_nodes: u.nodes(),
        iteration_series: cfg.keep_history.then(|| u.series()),
        runtime: started.elapsed(),
    }
}

fn whole(
    m: &ArchitectureModel,
    kernel: &LoopKernel,
    cfg: &EstimatorConfig,
    kb: u64,
    started: Instant,
) -> Result<LayerEstimate, EstimateError> {
    let mut u = Unrolled::new(m, kernel)?;
    u.append(kernel.k)?;
    let total = u.total()?;
    let last = kernel.k;
    let parts = (0, 0, u.span(last), u.overlap(last));
    Ok(finish(&kernel.name, &u, cfg, kernel.k, kb, Method::Whole, total, parts, started))
}

/// Estimate the cycles of one loop kernel on a model.
pub fn estimate_kernel(
    m: &ArchitectureModel,
    kernel: &LoopKernel,
    cfg: &EstimatorConfig,
) -> Result<LayerEstimate, EstimateError> {
    let started = Instant::now();
    cfg.validate()?;
    kernel.validate().map_err(EstimateError::Kernel)?;
    let k = kernel.k;
    let kb = k_block(kernel.len() as u64, u64::from(m.instruction_port_width().max(1)));
    let whole_graph = match cfg.mode {
        Mode::WholeGraph => true,
        Mode::Auto => k.saturating_mul(kernel.len() as u64) <= cfg.whole_graph_limit,
        Mode::FixedPoint => false,
    };
    if whole_graph || kb >= k || 3 * kb > k {
        return whole(m, kernel, cfg, kb, started);
    }

    let mut u = Unrolled::new(m, kernel)?;
    let budget = (3 * kb).max(cfg.fallback_iterations(k));
    u.append(3 * kb)?;
    let mut j = 3;
    loop {
        let (prev, cur) = ((j - 1) * kb, j * kb);
        if u.span(prev) == u.span(cur) {
            let (k_prolog, k_stop) = (prev, cur);
            let dt_prolog = u.elapsed(k_prolog);
            let dt_iter = u.span(k_stop);
            let dt_overlap = u.overlap(k_stop);
            // Extrapolate whole blocks, so a pattern repeating every
            // `k_block` iterations is carried over intact. With one iteration
            // per block this is (k − k_prolog)·(Δt_iteration − Δt_overlap).
            let end = |j: u64| u.last_leave[(j - 1) as usize] as i128;
            let (q, r) = ((k - k_prolog) / kb, (k - k_prolog) % kb);
            let block = end(k_stop) - end(k_prolog);
            let tail = end(k_prolog + r) - end(k_prolog);
            let hat = (dt_prolog as i128 + q as i128 * block + tail).max(0) as u64;
            let parts = (k_prolog, dt_prolog, dt_iter, dt_overlap);
            return Ok(finish(&kernel.name, &u, cfg, k, kb, Method::FixedPoint, hat, parts, started));
        }
        if u.iterations >= budget {
            break;
        }
        if u.iterations + kb > k {
            return whole(m, kernel, cfg, kb, started);
        }
        u.append(kb)?;
        j += 1;
    }

    // Average over every evaluated iteration, which is at least `k·fraction`,
    // and keep the first iteration out of the averaged range.
    let k01 = u.iterations;
    let kp = (k01 / cfg.fallback_prolog_divisor).max(1);
    let end = |j: u64| if j == 0 { u.min_enter } else { u.last_leave[(j - 1) as usize] };
    let progress = end(k01).saturating_sub(end(kp)) as u128;
    let steps = u128::from(k01 - kp);
    let rest = (u128::from(k - kp) * progress * 2 + steps) / (2 * steps);
    let dt_prolog = u.elapsed(kp);
    let hat = dt_prolog + rest as u64;
    let dt_iter = ((progress + steps / 2) / steps) as u64;
    let parts = (kp, dt_prolog, dt_iter, 0);
    Ok(finish(&kernel.name, &u, cfg, k, kb, Method::Fallback, hat, parts, started))
}

/// Map a layer and estimate it.
pub fn estimate_layer(
    m: &ArchitectureModel,
    layer: &LayerSpec,
    mapping: Mapping,
    cfg: &EstimatorConfig,
) -> Result<LayerEstimate, EstimateError> {
    let kernel = map_layer(layer, m, mapping).map_err(|source| EstimateError::Map { index: 0, source })?;
    estimate_kernel(m, &kernel, cfg)
}

/// Estimate independent loop kernels in parallel and sum them.
pub fn estimate_kernels(
    m: &ArchitectureModel,
    kernels: &[LoopKernel],
    cfg: &EstimatorConfig,
) -> Result<NetworkEstimate, EstimateError> {
    let started = Instant::now();
    let layers = kernels
        .par_iter()
        .enumerate()
        .map(|(index, kern)| {
            estimate_kernel(m, kern, cfg).map_err(|e| EstimateError::Layer { index, source: Box::new(e) })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NetworkEstimate {
        t_hat: layers.iter().map(|l| l.delta_t_hat).sum(),
        evaluated_iterations: layers.iter().map(|l| l.k_stop).sum(),
        evaluated_instructions: layers.iter().map(|l| l.k_stop * l.instructions_per_iteration).sum(),
        layers,
        runtime: started.elapsed(),
    })
}

/// Map every layer of a network and estimate the total.
pub fn estimate_network(
    m: &ArchitectureModel,
    layers: &[LayerSpec],
    mapping: Mapping,
    cfg: &EstimatorConfig,
) -> Result<NetworkEstimate, EstimateError> {
    let kernels = layers
        .iter()
        .enumerate()
        .map(|(index, l)| map_layer(l, m, mapping).map_err(|source| EstimateError::Map { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    estimate_kernels(m, &kernels, cfg)
}

/// `(Δt_iteration, Δt_overlap)` of every iteration from a whole-graph run.
pub fn iteration_series(m: &ArchitectureModel, kernel: &LoopKernel) -> Result<Vec<(u64, i64)>, EstimateError> {
    let mut u = Unrolled::new(m, kernel)?;
    u.append(kernel.k)?;
    Ok(u.series())
}
