//! Two iterations of an element-wise multiply-accumulate loop on the 2×2
//! systolic array. Prints every node with its enter and leave cycle and the
//! end-to-end latency (59 cycles).

use aidg_perf::fixtures::{elementwise_stream, reference_array};
use aidg_perf::prelude::*;

fn main() {
    let m = reference_array();
    let stream = elementwise_stream(2);
    let g = build_aidg(&m, &stream).expect("stream routes on the array");
    let r = evaluate(&g, m.issue_buffer_size(), None).expect("acyclic graph");

    println!("{:>4} {:>5} {:<40} {:>6} {:>6}", "node", "instr", "object", "enter", "leave");
    for (id, n) in g.nodes().iter().enumerate() {
        let object = if n.object == aidg_perf::aidg::WRITE_BACK { "writeBack" } else { m.object_name(n.object) };
        let instr = if n.span > 1 { format!("{}..{}", n.instr, n.instr + n.span - 1) } else { n.instr.to_string() };
        println!("{id:>4} {instr:>5} {object:<40} {:>6} {:>6}", r.t_enter[id], r.t_leave[id]);
    }
    println!("{} nodes, {} edges", g.len(), g.edge_count());
    println!("latency: {} cycles", aidg_latency(&r).expect("non-empty"));
}
