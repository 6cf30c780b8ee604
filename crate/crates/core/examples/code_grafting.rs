//! Fill a cache from a small corpus and graft one of its entries into a
//! program with a wrong branch.

use csg_rewrite::exec::execute;
use csg_rewrite::graft::{rewrite_cg, CacheConfig, CgConfig, SubexprCache};
use csg_rewrite::metrics::objective;
use csg_rewrite::parse::{parse, print};
use csg_rewrite::{Dim, ObjectiveConfig};

fn main() {
    let corpus = [
        "union(ellipse(0.3,0.3,-0.5,-0.5,0), rectangle(-0.4,-0.3,-0.6,-0.7,0))",
        "subtract(rectangle(0,0,-0.2,-0.2,0), ellipse(0,0,-0.6,-0.6,0))",
        "ellipse(-0.3,0.4,-0.7,-0.5,0.25)",
    ];
    let mut cache = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
    for (i, text) in corpus.iter().enumerate() {
        cache.insert_program(i, &parse(text, Dim::Two).unwrap());
    }
    println!("cache holds {} entries, mean length {:.2}", cache.len(), cache.mean_length());

    let truth = parse("union(rectangle(-0.4,-0.3,-0.6,-0.7,0), ellipse(0.3,0.3,-0.5,-0.5,0))", Dim::Two).unwrap();
    let x = execute(&truth);
    let z = parse("union(rectangle(-0.4,-0.3,-0.6,-0.7,0), rectangle(0.3,0.3,-0.5,-0.5,0))", Dim::Two).unwrap();
    let obj = ObjectiveConfig::for_dim(Dim::Two);
    println!("before {} O {:.4}", print(&z), objective(&x, &z, &obj).objective);
    match rewrite_cg(&x, &z, &cache, &obj, &CgConfig::default()) {
        Some(g) => println!("after  {} O {:.4}", print(&g), objective(&x, &g, &obj).objective),
        None => println!("no graft improved the objective"),
    }
}
