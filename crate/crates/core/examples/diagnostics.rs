//! Per-iteration span and overlap variance over a layer suite.
//!
//! Each layer is evaluated to the end so that the tail after the estimator's
//! stopping point can be inspected.
//!
//! ```text
//! cargo run --release --example diagnostics -- 2
//! ```

use aidg_perf::estimator::{estimate_kernel, iteration_series, variance_diagnostics, LayerSeries};
use aidg_perf::fixtures::layer_suite;
use aidg_perf::mapper::{map_layer, Mapping};
use aidg_perf::prelude::*;

fn main() {
    let size: u32 = std::env::args().nth(1).map_or(2, |a| a.parse().expect("array size"));
    let m = generate_systolic_array(&SystolicConfig::new(size, size, size));
    let cfg = EstimatorConfig::default();
    let mut series = Vec::new();
    println!("layer,kind,k,method,k_stop,delta_t_hat,whole");
    for (i, layer) in layer_suite().iter().enumerate() {
        let kernel = map_layer(layer, &m, Mapping::Scalar).expect("suite layers map");
        let e = estimate_kernel(&m, &kernel, &cfg).expect("estimate");
        let s = iteration_series(&m, &kernel).expect("series");
        let whole: u64 = {
            let w = estimate_kernel(&m, &kernel, &EstimatorConfig::with_mode(Mode::WholeGraph)).expect("whole");
            w.delta_t_hat
        };
        println!("{i},{},{},{},{},{},{whole}", layer.kind.name(), e.k, e.method.name(), e.k_stop, e.delta_t_hat);
        series.push(LayerSeries { method: e.method, k_stop: e.k_stop, series: s });
    }
    let d = variance_diagnostics(&series).expect("at least one layer has a tail");
    println!(
        "mean Var(iteration) = {:.4}, mean Var(overlap) = {:.4}, fallback layers = {:.2}",
        d.mean_var_iteration, d.mean_var_overlap, d.fallback_layer_fraction
    );
}
