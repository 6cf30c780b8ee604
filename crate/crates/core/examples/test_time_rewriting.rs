//! Three rounds of PO, CP and CG on a noisy program, with the step trace.

use csg_rewrite::exec::execute;
use csg_rewrite::graft::{CacheConfig, SubexprCache};
use csg_rewrite::parse::{parse, print};
use csg_rewrite::rewriters::RewriterSuite;
use csg_rewrite::ttr::{ttr_report, TtrConfig};
use csg_rewrite::{Dim, ObjectiveConfig};

fn main() {
    let truth = parse("subtract(rectangle(0,0,-0.1,-0.3,0), ellipse(0.2,0.1,-0.7,-0.7,0))", Dim::Two).unwrap();
    let x = execute(&truth);
    let z = parse(
        "union(subtract(rectangle(0.05,0.05,-0.15,-0.25,0.05), ellipse(0.25,0.05,-0.65,-0.7,0)), ellipse(-0.6,0.6,-0.95,-0.95,0))",
        Dim::Two,
    )
    .unwrap();
    let mut cache = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
    cache.insert_program(0, &truth);
    let cfg = TtrConfig::new(RewriterSuite::new(ObjectiveConfig::for_dim(Dim::Two)));
    let (best, trace) = ttr_report(&x, &z, &cache, &cfg);
    for s in &trace {
        println!(
            "round {} {:<2} {} O {:.4} -> {:.4} ({:.0} ms)",
            s.round,
            s.rewriter.name(),
            if s.accepted { "accepted" } else { "kept    " },
            s.objective_before,
            s.objective_after,
            s.millis
        );
    }
    println!("{}", print(&best));
}
