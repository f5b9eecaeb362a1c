//! Write the dependency graph of one iteration as annotated DOT and JSON.
//!
//! ```text
//! cargo run --example export_graph > graph.dot && dot -Tsvg graph.dot -o graph.svg
//! ```

use aidg_perf::aidg::export_json;
use aidg_perf::fixtures::{elementwise_stream, reference_array};
use aidg_perf::prelude::*;

fn main() {
    let m = reference_array();
    let g = build_aidg(&m, &elementwise_stream(1)).unwrap();
    let r = evaluate(&g, m.issue_buffer_size(), None).unwrap();
    print!("{}", export_dot(&g, &m, Some(&r)));
    let json = export_json(&g, &m, Some(&r));
    eprintln!("{} nodes, {} edges, {} bytes of JSON", g.len(), g.edge_count(), json.len());
}
