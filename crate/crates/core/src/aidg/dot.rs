use std::fmt::Write;

use serde::Serialize;

use super::{Aidg, Edge, EdgeKind, NodeKind};
use crate::eval::EvalResult;
use crate::model::ArchitectureModel;

fn style(kind: EdgeKind) -> &'static str {
    match kind {
        EdgeKind::Forward => "style=solid, color=black, label=\"f\"",
        EdgeKind::Structural => "style=dashed, color=red, label=\"s\"",
        EdgeKind::Data => "style=dotted, color=blue, label=\"d\"",
        EdgeKind::Buffer => "style=bold, color=darkgreen, label=\"b\"",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Render a graph in DOT, optionally annotated with evaluation times.
pub fn export_dot(g: &Aidg, m: &ArchitectureModel, times: Option<&EvalResult>) -> String {
    let mut out = String::from("digraph aidg {\n");
    if g.is_empty() {
        out.push_str("}\n");
        return out;
    }
    out.push_str("  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n");
    out.push_str("  subgraph cluster_legend {\n    label=\"edges\";\n");
    for (i, kind) in [EdgeKind::Forward, EdgeKind::Structural, EdgeKind::Data, EdgeKind::Buffer]
        .into_iter()
        .enumerate()
    {
        let _ = writeln!(out, "    legend_a{i} [shape=point]; legend_b{i} [shape=point];");
        let _ = writeln!(out, "    legend_a{i} -> legend_b{i} [{}];", style(kind));
    }
    out.push_str("  }\n");
    for (id, n) in g.nodes().iter().enumerate() {
        let instrs = if n.kind == NodeKind::Plain {
            format!("i{}", n.instr)
        } else {
            format!("i{}..i{}", n.instr, n.instr + n.span - 1)
        };
        let mut label = format!("n{id}\\n{}\\n{instrs}", escape(m.object_name(n.object)));
        if let Some(r) = times.filter(|r| id < r.len()) {
            let _ = write!(label, "\\n[{}, {}]", r.t_enter[id], r.t_leave[id]);
        }
        let _ = writeln!(out, "  n{id} [label=\"{label}\"];");
    }
    for Edge { src, dst, kind } in g.edges() {
        let _ = writeln!(out, "  n{src} -> n{dst} [{}];", style(kind));
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: usize,
    object: &'a str,
    instruction: u32,
    span: u32,
    kind: NodeKind,
    latency: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_enter: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_leave: Option<u64>,
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    nodes: Vec<JsonNode<'a>>,
    edges: Vec<Edge>,
}

/// Debug dump as `{nodes, edges}`.
pub fn export_json(g: &Aidg, m: &ArchitectureModel, times: Option<&EvalResult>) -> String {
    let nodes = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, n)| {
            let t = times.filter(|r| id < r.len());
            JsonNode {
                id,
                object: m.object_name(n.object),
                instruction: n.instr,
                span: n.span,
                kind: n.kind,
                latency: n.latency,
                t_enter: t.map(|r| r.t_enter[id]),
                t_leave: t.map(|r| r.t_leave[id]),
            }
        })
        .collect();
    let graph = JsonGraph { nodes, edges: g.edges().collect() };
    serde_json::to_string_pretty(&graph).expect("graph dump serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aidg::build_aidg;
    use crate::model::systolic::{generate_systolic_array, reg, SystolicConfig};
    use crate::model::Instruction;

    #[test]
    fn empty_graph_is_header_only() {
        let m = generate_systolic_array(&SystolicConfig::new(1, 1, 1));
        let g = build_aidg(&m, &[]).unwrap();
        assert_eq!(export_dot(&g, &m, None), "digraph aidg {\n}\n");
    }

    #[test]
    fn single_instruction_renders_each_node() {
        let m = generate_systolic_array(&SystolicConfig::new(1, 1, 1));
        let i = Instruction::new("mac").reads([reg(0, 0, "x")]).writes([reg(0, 0, "acc")]);
        let g = build_aidg(&m, &[i]).unwrap();
        let dot = export_dot(&g, &m, None);
        for id in 0..g.len() {
            assert!(dot.contains(&format!("  n{id} [label=")), "{dot}");
        }
        assert!(dot.contains("processingElement[0][0]"));
        let json: serde_json::Value = serde_json::from_str(&export_json(&g, &m, None)).unwrap();
        assert_eq!(json["nodes"].as_array().unwrap().len(), g.len());
    }
}
