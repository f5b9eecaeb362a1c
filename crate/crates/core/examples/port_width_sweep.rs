//! Memory port width sweep on a 12×12 array.
//!
//! A conv whose channel counts divide the array keeps all 144 PEs busy; one
//! with C=20, K=70 unrolls only 10×10. Weight loads per column take
//! `ceil(12 / port_width)` transactions, so widths 7 through 11 cost the same.
//!
//! ```text
//! cargo run --release --example port_width_sweep
//! ```

use aidg_perf::estimator::estimate_layer;
use aidg_perf::mapper::Mapping;
use aidg_perf::prelude::*;

fn main() {
    let divisible = LayerSpec::conv1d(12, 72, 16, 3);
    let ragged = LayerSpec::conv1d(20, 70, 16, 3);
    let cfg = EstimatorConfig::default();
    println!("port_width,divisible,non_divisible");
    for p in 1..=12 {
        let m = generate_systolic_array(&SystolicConfig::new(12, 12, p));
        let a = estimate_layer(&m, &divisible, Mapping::Scalar, &cfg).expect("divisible conv maps");
        let b = estimate_layer(&m, &ragged, Mapping::Scalar, &cfg).expect("ragged conv maps");
        println!("{p},{},{}", a.delta_t_hat, b.delta_t_hat);
    }
}
