//! Command logic behind the `aidg-perf` binary.
//!
//! Data files written here never contain wall-clock times, so identical inputs
//! give byte-identical outputs. Timings go to the caller's side channel.

use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aidg::{build_aidg, export_dot};
use crate::estimator::{estimate_kernels, EstimatorConfig, Method, NetworkEstimate};
use crate::eval::evaluate;
use crate::mapper::{map_layer, parse_network, LayerSpec, LoopKernel, Mapping};
use crate::model::systolic::{generate_systolic_array, SystolicConfig, SystolicLatencies};
use crate::model::{validate_model, ArchitectureModel, Diagnostic};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Io { .. } | CliError::Usage(_) => 2,
        }
    }

    fn failure(e: impl std::fmt::Display) -> Self {
        CliError::Failure(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Io { path: p.display().to_string(), message: e.to_string() }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn load_model(path: &Path) -> Result<ArchitectureModel, CliError> {
    let text = read(path)?;
    ArchitectureModel::from_json(&text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

/// A network of layers or a hand-written loop kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Network(Vec<LayerSpec>),
    Kernel(LoopKernel),
}

impl Workload {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('[') {
            return parse_network(text).map(Workload::Network).map_err(CliError::failure);
        }
        let kernel: LoopKernel = serde_json::from_str(text).map_err(CliError::failure)?;
        kernel.validate().map_err(CliError::failure)?;
        Ok(Workload::Kernel(kernel))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read(path)?).map_err(|e| match e {
            CliError::Failure(msg) => CliError::Failure(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn kernels(&self, m: &ArchitectureModel, mapping: Mapping) -> Result<Vec<LoopKernel>, CliError> {
        match self {
            Workload::Kernel(k) => Ok(vec![k.clone()]),
            Workload::Network(layers) => layers
                .iter()
                .enumerate()
                .map(|(i, l)| map_layer(l, m, mapping).map_err(|e| CliError::Failure(format!("layer {i}: {e}"))))
                .collect(),
        }
    }
}

/// Diagnostics of a model file; empty means valid.
pub fn cmd_validate(path: &Path) -> Result<Vec<Diagnostic>, CliError> {
    Ok(validate_model(&load_model(path)?))
}

#[derive(Debug, Clone, Serialize)]
struct KernelSummary<'a> {
    layer: usize,
    name: &'a str,
    k: u64,
    instructions_per_iteration: usize,
    instructions: &'a [crate::model::Instruction],
}

/// JSON listing of the loop kernels of a workload.
pub fn cmd_map(m: &ArchitectureModel, w: &Workload, mapping: Mapping) -> Result<String, CliError> {
    let kernels = w.kernels(m, mapping)?;
    let rows: Vec<_> = kernels
        .iter()
        .enumerate()
        .map(|(layer, k)| KernelSummary {
            layer,
            name: &k.name,
            k: k.k,
            instructions_per_iteration: k.len(),
            instructions: &k.instructions,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows).map_err(CliError::failure)? + "\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub layer: usize,
    pub kind: String,
    pub k: u64,
    pub k_stop: u64,
    pub method: Method,
    pub delta_t_hat: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub t_hat: u64,
    pub evaluated_iterations: u64,
}

/// Report column names, in order.
pub const REPORT_COLUMNS: [&str; 6] = ["layer", "kind", "k", "k_stop", "method", "delta_t_hat"];

impl Report {
    pub fn from_estimate(e: &NetworkEstimate) -> Self {
        Report {
            rows: e
                .layers
                .iter()
                .enumerate()
                .map(|(layer, l)| ReportRow {
                    layer,
                    kind: l.name.clone(),
                    k: l.k,
                    k_stop: l.k_stop,
                    method: l.method,
                    delta_t_hat: l.delta_t_hat,
                })
                .collect(),
            t_hat: e.t_hat,
            evaluated_iterations: e.evaluated_iterations,
        }
    }

    /// One row per layer and a final `total` row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.layer.to_string(),
                r.kind.clone(),
                r.k.to_string(),
                r.k_stop.to_string(),
                r.method.name().to_string(),
                r.delta_t_hat.to_string(),
            ])
            .expect("in-memory write");
        }
        let k: u64 = self.rows.iter().map(|r| r.k).sum();
        w.write_record(["total", "", &k.to_string(), &self.evaluated_iterations.to_string(), "", &self.t_hat.to_string()])
            .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Estimate a workload. Returns the report and per-layer runtimes.
pub fn cmd_estimate(
    m: &ArchitectureModel,
    w: &Workload,
    mapping: Mapping,
    cfg: &EstimatorConfig,
) -> Result<(Report, Vec<Duration>, NetworkEstimate), CliError> {
    let kernels = w.kernels(m, mapping)?;
    let e = estimate_kernels(m, &kernels, cfg).map_err(CliError::failure)?;
    let times = e.layers.iter().map(|l| l.runtime).collect();
    Ok((Report::from_estimate(&e), times, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub from: u32,
    pub to: u32,
}

impl Span {
    fn values(self) -> impl Iterator<Item = u32> {
        self.from..=self.to
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Systolic,
}

/// A grid of generated models, each estimated on the same layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub template: Template,
    pub rows: Span,
    pub cols: Span,
    pub port_width: Span,
    /// Only pair equal row and column counts.
    #[serde(default)]
    pub square: bool,
    #[serde(default)]
    pub instruction_port_width: Option<u32>,
    #[serde(default)]
    pub latencies: Option<SystolicLatencies>,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub rows: u32,
    pub cols: u32,
    pub port_width: u32,
    pub t_hat: Option<u64>,
    pub evaluated_iterations: Option<u64>,
    pub error: Option<String>,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["rows", "cols", "port_width", "t_hat", "evaluated_iterations", "error"];

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: SweepSpec = serde_json::from_str(text).map_err(CliError::failure)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (name, s) in [("rows", self.rows), ("cols", self.cols), ("port_width", self.port_width)] {
            if s.from == 0 || s.from > s.to {
                return Err(CliError::Failure(format!("{name} range {}..={} is empty or starts at 0", s.from, s.to)));
            }
        }
        if self.instruction_port_width == Some(0) {
            return Err(CliError::Failure("instruction_port_width must be at least 1".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate().map_err(|e| CliError::Failure(format!("layer {i}: {e}")))?;
        }
        self.estimator.validate().map_err(CliError::failure)
    }

    pub fn points(&self) -> Vec<(u32, u32, u32)> {
        let mut pts = Vec::new();
        for r in self.rows.values() {
            for c in self.cols.values() {
                if self.square && r != c {
                    continue;
                }
                for p in self.port_width.values() {
                    pts.push((r, c, p));
                }
            }
        }
        pts
    }

    pub fn model(&self, rows: u32, cols: u32, port_width: u32) -> ArchitectureModel {
        let mut cfg = SystolicConfig::new(rows, cols, port_width);
        if let Some(ip) = self.instruction_port_width {
            cfg.instruction_port_width = ip;
        }
        if let Some(l) = &self.latencies {
            cfg.latencies = l.clone();
        }
        generate_systolic_array(&cfg)
    }
}

fn sweep_point(spec: &SweepSpec, (rows, cols, port_width): (u32, u32, u32)) -> SweepRow {
    let m = spec.model(rows, cols, port_width);
    let result = Workload::Network(spec.layers.clone())
        .kernels(&m, Mapping::Scalar)
        .and_then(|ks| estimate_kernels(&m, &ks, &spec.estimator).map_err(CliError::failure));
    match result {
        Ok(e) => SweepRow {
            rows,
            cols,
            port_width,
            t_hat: Some(e.t_hat),
            evaluated_iterations: Some(e.evaluated_iterations),
            error: None,
        },
        Err(e) => SweepRow { rows, cols, port_width, t_hat: None, evaluated_iterations: None, error: Some(e.to_string()) },
    }
}

/// Estimate every sweep point. Rows come back in sweep-coordinate order;
/// a failing point is recorded in its row and the sweep continues.
pub fn cmd_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Vec<SweepRow>, CliError> {
    spec.validate()?;
    let pts = spec.points();
    let run = || pts.par_iter().map(|&pt| sweep_point(spec, pt)).collect::<Vec<_>>();
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))
            .map(|pool| pool.install(run)),
        None => Ok(run()),
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).expect("in-memory write");
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.rows.to_string(),
            r.cols.to_string(),
            r.port_width.to_string(),
            opt(r.t_hat),
            opt(r.evaluated_iterations),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Default bound on exported graph size, in instructions.
pub const EXPORT_CAP: u64 = 20_000;

/// DOT graph of the first `iterations` iterations of the workload's first
/// kernel.
pub fn cmd_export_aidg(
    m: &ArchitectureModel,
    w: &Workload,
    mapping: Mapping,
    iterations: u64,
    annotate: bool,
    cap: u64,
) -> Result<String, CliError> {
    if iterations == 0 {
        return Err(CliError::Usage("--iterations must be at least 1".into()));
    }
    let kernels = w.kernels(m, mapping)?;
    let kernel = kernels.first().ok_or_else(|| CliError::Failure("workload has no layers".into()))?;
    let count = iterations.saturating_mul(kernel.len() as u64);
    if count > cap {
        return Err(CliError::Failure(format!("{count} instructions exceed the export cap of {cap}")));
    }
    let g = build_aidg(m, &kernel.stream(iterations)).map_err(CliError::failure)?;
    let times = if annotate { Some(evaluate(&g, m.issue_buffer_size(), None).map_err(CliError::failure)?) } else { None };
    Ok(export_dot(&g, m, times.as_ref()))
}
