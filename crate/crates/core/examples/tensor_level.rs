//! A single-unit accelerator whose `conv_ext` instruction covers a whole
//! layer. The latency comes from an expression over the layer immediates, so
//! the network total is the sum of those latencies plus the cycles spent
//! fetching each instruction.

use aidg_perf::mapper::Mapping;
use aidg_perf::model::tensor::conv_ext_model;
use aidg_perf::oracle::simulate;
use aidg_perf::prelude::*;

fn main() {
    let lat = LatencyExpr::parse("C * K * F * ceil_div(C_w, s) / 8 + 4").unwrap();
    let m = conv_ext_model(lat.clone());
    let net = vec![
        LayerSpec::conv1d(40, 16, 101, 3),
        LayerSpec::conv1d(16, 24, 101, 9).with_stride(2),
        LayerSpec::conv1d(24, 32, 51, 9).with_stride(2),
        LayerSpec::conv1d(32, 48, 26, 9).with_stride(2),
        LayerSpec::fully_connected(48, 12),
    ];
    let e = estimate_network(&m, &net, Mapping::Auto, &EstimatorConfig::default()).unwrap();
    let mut compute = 0;
    for (l, le) in net.iter().zip(&e.layers) {
        let kernel = aidg_perf::mapper::map_layer(l, &m, Mapping::Auto).unwrap();
        let c = lat.eval(&kernel.instructions[0].immediates).unwrap();
        compute += c;
        println!("{:<16} {:>8} cycles (expression {c})", le.name, le.delta_t_hat);
    }
    println!("layer sum {}, compute {compute}, fetch overhead {}", e.t_hat, e.t_hat - compute);

    // The whole network as one instruction stream on the reference simulator.
    let stream: Vec<Instruction> = net
        .iter()
        .flat_map(|l| aidg_perf::mapper::map_layer(l, &m, Mapping::Auto).unwrap().instructions)
        .collect();
    let sim = simulate(&m, &stream).unwrap();
    println!("back-to-back on the simulator: {} cycles", sim.total);
}
