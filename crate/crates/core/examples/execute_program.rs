//! Parse a 2D program, execute it and write a PGM next to the temp dir.

use csg_rewrite::exec::execute;
use csg_rewrite::io::render;
use csg_rewrite::parse::{parse, print};
use csg_rewrite::Dim;

fn main() {
    let text = "subtract(union(rectangle(-0.25,0,-0.2,0.1,0), ellipse(0.3,0.1,-0.3,-0.3,0)), ellipse(-0.25,0,-0.8,-0.8,0))";
    let z = parse(text, Dim::Two).expect("valid program");
    let g = execute(&z);
    println!("{}", print(&z));
    println!("length {}, depth {}, {} of {} cells occupied", z.program_length(), z.depth(), g.count(), g.len());
    let out = std::env::temp_dir().join("execute_program.pgm");
    for p in render(&g, &out).expect("writable temp dir") {
        println!("wrote {}", p.display());
    }
}
