//! Recover perturbed parameters with PO and print the loss curve.

use csg_rewrite::exec::execute;
use csg_rewrite::metrics::{iou, objective};
use csg_rewrite::po::{optimize_params, rewrite_po, PoConfig};
use csg_rewrite::parse::{parse, print};
use csg_rewrite::{Dim, ObjectiveConfig};

fn main() {
    let truth = parse("union(rectangle(-0.3,0.1,-0.2,0.1,0.1), ellipse(0.35,-0.2,-0.3,0,0))", Dim::Two).unwrap();
    let x = execute(&truth);
    let start = parse("union(rectangle(-0.2,0.2,-0.3,0.2,0), ellipse(0.25,-0.1,-0.2,0.1,0.1))", Dim::Two).unwrap();
    let cfg = PoConfig::default();
    let run = optimize_params(&x, &start, &cfg);
    for (i, l) in run.losses.iter().enumerate().step_by(50) {
        println!("step {i:>3} loss {l:.5}");
    }
    let obj = ObjectiveConfig::for_dim(Dim::Two);
    println!("IoU {:.4} -> {:.4}", iou(&x, &execute(&start)).unwrap(), iou(&x, &execute(&run.program)).unwrap());
    match rewrite_po(&x, &start, &cfg, &obj) {
        Some(z) => println!("accepted: {} (O {:.4})", print(&z), objective(&x, &z, &obj).objective),
        None => println!("no objective gain"),
    }
}
