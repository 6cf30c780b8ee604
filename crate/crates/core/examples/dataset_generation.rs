//! Generate a small 3D dataset, read it back and render the first shape.

use csg_rewrite::io::{gen_data, render, DatasetManifest};
use csg_rewrite::Dim;

fn main() {
    let dir = std::env::temp_dir().join("csg_dataset_example");
    let m = gen_data(Dim::Three, 4, 2, 42, &dir).expect("writable temp dir");
    let back = DatasetManifest::load(&dir).unwrap();
    assert_eq!(back.items, m.items);
    let grids = back.load_grids().unwrap();
    for (it, g) in back.items.iter().zip(&grids) {
        println!("{} {} occupied of {}", it.grid.display(), g.count(), g.len());
    }
    for p in render(&grids[0], &dir.join("shape_0000.pgm")).unwrap() {
        println!("wrote {}", p.display());
    }
}
