//! Lower layers with the three mappings and show the resulting loop kernels.

use aidg_perf::mapper::{im2col_dims, map_layer, Mapping};
use aidg_perf::model::tensor::{conv_ext_model, gemm_tile_model, TileLatencies};
use aidg_perf::prelude::*;

fn summary(k: &LoopKernel) -> String {
    let mut ops: Vec<(String, usize)> = Vec::new();
    for i in &k.instructions {
        match ops.iter_mut().find(|(o, _)| *o == i.operation) {
            Some((_, n)) => *n += 1,
            None => ops.push((i.operation.clone(), 1)),
        }
    }
    let ops: Vec<String> = ops.iter().map(|(o, n)| format!("{o}×{n}")).collect();
    format!("{}: {} instructions × {} iterations [{}]", k.name, k.len(), k.k, ops.join(", "))
}

fn main() {
    let array = generate_systolic_array(&SystolicConfig::new(4, 4, 4));
    let layers = [
        LayerSpec::conv1d(16, 24, 101, 9).with_stride(2).with_padding(true),
        LayerSpec::conv1d(20, 70, 16, 3),
        LayerSpec::fully_connected(48, 12),
        LayerSpec::elementwise(LayerKind::Add, 24, 51),
        LayerSpec { fused: Some("relu".into()), ..LayerSpec::conv1d(8, 8, 32, 3) },
    ];
    println!("scalar mapping on a 4x4 array:");
    for l in &layers {
        let k = map_layer(l, &array, Mapping::Scalar).unwrap();
        let macs = k.count_operation("mac") as u64 * k.k;
        println!("  {}  (macs {macs}, analytic {:?})", summary(&k), l.analytic_macs());
    }

    let engine = conv_ext_model(LatencyExpr::parse("C * K * F").unwrap());
    println!("conv_ext mapping:");
    for l in &layers[..3] {
        let k = map_layer(l, &engine, Mapping::Auto).unwrap();
        println!("  {} with immediates {:?}", summary(&k), k.instructions[0].immediates);
    }

    let conv2d = LayerSpec::conv2d(3, 16, 32, 32, 3, 3).with_padding(true);
    let tiles = gemm_tile_model(16, &TileLatencies::default());
    println!("im2col of a 3x3 conv2d: {:?}", im2col_dims(&conv2d).unwrap());
    println!("  {}", summary(&map_layer(&conv2d, &tiles, Mapping::Auto).unwrap()));

    let err = map_layer(&LayerSpec::conv2d(3, 8, 8, 8, 3, 3), &engine, Mapping::ConvExt).unwrap_err();
    println!("conv2d on the conv_ext engine: {err}");
}
