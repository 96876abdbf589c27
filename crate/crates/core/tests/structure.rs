mod common;

use proptest::prelude::*;

use proofloop::elab::{Origin, SignalKind};
use proofloop::rtl::ast::Edge;
use proofloop::structure::{ConeDirection, DepEdge, DesignGraph, Polarity, ResetKind, SignalNode, StructureError};

use common::*;

fn graph(n: usize, edges: &[(usize, usize)]) -> DesignGraph {
    let nodes = (0..n).map(|i| SignalNode { name: format!("n{i:02}"), path: format!("n{i:02}"), width: 1, kind: SignalKind::Wire }).collect();
    DesignGraph::from_parts("g".into(), nodes, edges.iter().map(|&(a, b)| DepEdge { driver: a, driven: b, origin: Origin::Assign }).collect())
}

#[test]
fn case_study_resets() {
    let d = corpus_design("fsm_exec_units");
    let dec = d.graph.flop_properties("u_dec.stage_q").unwrap();
    let r = dec.reset.as_ref().unwrap();
    assert_eq!((r.signal.as_str(), r.polarity, r.kind, r.value), ("u_dec.srst", Polarity::ActiveHigh, ResetKind::Sync, 0));
    let fetch = d.graph.flop_properties("u_fetch.valid").unwrap();
    let r = fetch.reset.as_ref().unwrap();
    assert_eq!((r.signal.as_str(), r.polarity, r.kind), ("u_fetch.rst_n", Polarity::ActiveLow, ResetKind::Async));
    assert_eq!((fetch.clock.as_str(), fetch.edge), ("u_fetch.clk", Edge::Pos));
}

#[test]
fn flop_query_errors() {
    let d = corpus_design("fsm_exec_units");
    assert!(matches!(d.graph.flop_properties("busy"), Err(StructureError::NotAFlop(_))));
    assert!(matches!(d.graph.flop_properties("nope"), Err(StructureError::UnknownSignal(_))));
}

#[test]
fn multi_driven_register_reported() {
    let d = design(
        "module m(input logic clk, input logic a, input logic b, output logic q);
  always_ff @(posedge clk) q <= a;
  always_ff @(posedge clk) q <= b;
endmodule",
        "m",
    );
    assert!(matches!(d.graph.flop_properties("q"), Err(StructureError::MultiDriver(_))));
}

#[test]
fn fanin_crosses_instance_ports() {
    let d = corpus_design("fsm_exec_units");
    let cone = d.graph.cone("done", ConeDirection::Fanin, None).unwrap();
    for s in ["w_v", "u_wb.valid", "u_fetch.valid", "start", "rst_n"] {
        assert!(cone.iter().any(|c| c == s), "{s} missing from {cone:?}");
    }
    assert!(!cone.iter().any(|c| c == "done"));
    let mut sorted = cone.clone();
    sorted.sort();
    assert_eq!(cone, sorted);
}

#[test]
fn depth_zero_is_empty() {
    let d = design(TOGGLE, "toggle");
    assert!(d.graph.cone("q", ConeDirection::Fanin, Some(0)).unwrap().is_empty());
    assert_eq!(d.graph.cone("q", ConeDirection::Fanin, Some(1)).unwrap(), ["rst"]);
}

#[test]
fn unknown_seed_is_an_error() {
    let d = design(TOGGLE, "toggle");
    assert!(matches!(d.graph.cone("zz", ConeDirection::Fanout, None), Err(StructureError::UnknownSignal(_))));
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..20).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..n * 3)))
}

proptest! {
    #[test]
    fn cone_grows_with_depth((n, edges) in random_graph(), seed in 0usize..20, d in 0usize..6) {
        let g = graph(n, &edges);
        let s = format!("n{:02}", seed % n);
        for dir in [ConeDirection::Fanin, ConeDirection::Fanout] {
            let small = g.cone(&s, dir, Some(d)).unwrap();
            let big = g.cone(&s, dir, Some(d + 1)).unwrap();
            let full = g.cone(&s, dir, None).unwrap();
            prop_assert!(small.iter().all(|x| big.contains(x)));
            prop_assert!(big.iter().all(|x| full.contains(x)));
            prop_assert_eq!(g.cone(&s, dir, Some(n)).unwrap(), full);
        }
    }

    #[test]
    fn fanin_and_fanout_are_dual((n, edges) in random_graph()) {
        let g = graph(n, &edges);
        for a in 0..n {
            let an = format!("n{a:02}");
            let out = g.cone(&an, ConeDirection::Fanout, None).unwrap();
            for b in 0..n {
                let bn = format!("n{b:02}");
                let back = g.cone(&bn, ConeDirection::Fanin, None).unwrap();
                prop_assert_eq!(out.contains(&bn), back.contains(&an));
            }
        }
    }
}
