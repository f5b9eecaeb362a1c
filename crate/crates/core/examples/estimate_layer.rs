//! Estimate one convolution with the three evaluation modes and compare the
//! number of instructions each one had to evaluate.
//!
//! ```text
//! cargo run --release --example estimate_layer
//! ```

use aidg_perf::mapper::{map_layer, Mapping};
use aidg_perf::prelude::*;

fn main() {
    let m = generate_systolic_array(&SystolicConfig::new(8, 8, 8));
    let layer = LayerSpec::conv1d(32, 48, 26, 9).with_stride(2).with_padding(true);
    let kernel = map_layer(&layer, &m, Mapping::Scalar).unwrap();
    println!("{} instructions per iteration, k = {}", kernel.len(), kernel.k);

    for mode in [Mode::WholeGraph, Mode::FixedPoint, Mode::Auto] {
        let e = estimate_layer(&m, &layer, Mapping::Scalar, &EstimatorConfig::with_mode(mode)).unwrap();
        println!(
            "{mode:?}: {} cycles via {} after {} iterations ({} nodes) in {:.1} ms",
            e.delta_t_hat,
            e.method.name(),
            e.k_stop,
            e.evaluated_nodes,
            e.runtime.as_secs_f64() * 1e3
        );
        if e.method == Method::FixedPoint {
            println!(
                "  prolog {} iterations / {} cycles, span {}, overlap {}",
                e.k_prolog, e.delta_t_prolog, e.delta_t_iteration, e.delta_t_overlap
            );
        }
    }
}
