//! Greedy pruning versus the exhaustive oracle on a program with dead code.

use csg_rewrite::exec::execute;
use csg_rewrite::metrics::objective;
use csg_rewrite::parse::{parse, print};
use csg_rewrite::prune::{oracle_cp, rewrite_cp, CpConfig};
use csg_rewrite::{Dim, ObjectiveConfig};

fn main() {
    // the tiny rectangle executes empty and the big one covers every cell
    let z = parse(
        "intersect(union(ellipse(0,0,-0.4,-0.4,0), rectangle(0.5,0.5,-0.99,-0.99,0)), rectangle(0,0,0.99,0.99,0))",
        Dim::Two,
    )
    .unwrap();
    let x = execute(&z);
    let obj = ObjectiveConfig::for_dim(Dim::Two);
    println!("input   {} O {:.4}", print(&z), objective(&x, &z, &obj).objective);
    if let Some(g) = rewrite_cp(&x, &z, &obj, &CpConfig::default()) {
        println!("greedy  {} O {:.4}", print(&g), objective(&x, &g, &obj).objective);
    }
    let o = oracle_cp(&x, &z, &obj).expect("small program");
    println!("oracle  {} O {:.4}", print(&o), objective(&x, &o, &obj).objective);
}
