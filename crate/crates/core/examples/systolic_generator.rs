//! Generate systolic arrays of several sizes, validate them and write one as
//! JSON.

use aidg_perf::model::ObjectKind;
use aidg_perf::prelude::*;

fn main() {
    println!("size,objects,execute_stages,functional_units,memory_access_units,registers");
    for n in [1, 2, 4, 8, 12, 16] {
        let m = generate_systolic_array(&SystolicConfig::new(n, n, n));
        assert!(validate_model(&m).is_empty(), "generated model has diagnostics");
        println!(
            "{n}x{n},{},{},{},{},{}",
            m.objects().len(),
            m.count_kind(ObjectKind::ExecuteStage),
            m.count_kind(ObjectKind::FunctionalUnit),
            m.count_kind(ObjectKind::MemoryAccessUnit),
            m.register_count()
        );
    }
    let mut cfg = SystolicConfig::new(2, 2, 2);
    cfg.latencies.data_write = LatencyExpr::parse("3 + num_words").unwrap();
    let m = generate_systolic_array(&cfg);
    let json = m.to_json();
    let back = ArchitectureModel::from_json(&json).expect("round trip");
    assert_eq!(back.objects().len(), m.objects().len());
    println!("2x2 model with a word-dependent write latency: {} bytes of JSON", json.len());
}
