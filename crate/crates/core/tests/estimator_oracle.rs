//! The estimator against whole-graph evaluation on mapped layers.

use aidg_perf::estimator::{estimate_kernel, percentage_error, EstimatorConfig, Method, Mode};
use aidg_perf::mapper::{map_layer, LayerKind, LayerSpec, Mapping};
use aidg_perf::model::systolic::{generate_systolic_array, SystolicConfig};
use proptest::prelude::*;

fn layer() -> impl Strategy<Value = LayerSpec> {
    let conv = (1u32..12, 1u32..12, 4u32..24, 1u32..5, 1u32..3, any::<bool>())
        .prop_map(|(c, k, w, f, s, p)| LayerSpec::conv1d(c, k, w.max(f), f).with_stride(s).with_padding(p));
    let fc = (1u32..40, 1u32..16).prop_map(|(c, k)| LayerSpec::fully_connected(c, k));
    let ew = (prop::sample::select(vec![LayerKind::Relu, LayerKind::Clip, LayerKind::Add, LayerKind::Mul]), 1u32..16, 1u32..30)
        .prop_map(|(kind, c, w)| LayerSpec::elementwise(kind, c, w));
    prop_oneof![conv, fc, ew]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn fixed_point_tracks_whole_graph(l in layer(), n in 1u32..=4, p in 1u32..=4) {
        let m = generate_systolic_array(&SystolicConfig::new(n, n, p));
        let kernel = map_layer(&l, &m, Mapping::Scalar).unwrap();
        prop_assume!(kernel.k <= 2000);
        let whole = estimate_kernel(&m, &kernel, &EstimatorConfig::with_mode(Mode::WholeGraph)).unwrap();
        let fixed = estimate_kernel(&m, &kernel, &EstimatorConfig::with_mode(Mode::FixedPoint)).unwrap();
        prop_assert!(fixed.k_stop <= kernel.k);
        let pe = percentage_error(fixed.delta_t_hat as f64, whole.delta_t_hat as f64).unwrap();
        prop_assert!(pe.abs() <= 10.0, "{:?}: {} vs {}", l, fixed.delta_t_hat, whole.delta_t_hat);
        if fixed.method == Method::FixedPoint {
            prop_assert_eq!(fixed.delta_t_hat, whole.delta_t_hat);
        }
    }
}

#[test]
fn whole_graph_mode_matches_plain_evaluation() {
    use aidg_perf::fixtures::{elementwise_kernel, reference_array};
    let m = reference_array();
    for k in [1, 2, 3, 10] {
        let e = estimate_kernel(&m, &elementwise_kernel(k), &EstimatorConfig::with_mode(Mode::WholeGraph)).unwrap();
        let g = aidg_perf::aidg::build_aidg(&m, &elementwise_kernel(k).stream(k)).unwrap();
        let r = aidg_perf::eval::evaluate(&g, m.issue_buffer_size(), None).unwrap();
        assert_eq!(e.delta_t_hat, aidg_perf::eval::aidg_latency(&r).unwrap());
        assert_eq!(e.method, Method::Whole);
    }
}
