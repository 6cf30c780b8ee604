//! A short SIRI run against PLAD on self-generated 2D shapes; prints the
//! history CSV of each.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use csg_rewrite::sampler::{sample_nondegenerate, SamplerConfig};
use csg_rewrite::siri::{LoopConfig, MemorizingRetriever, Mode, SiriLoop};
use csg_rewrite::{Dim, Shape};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = SamplerConfig::new(Dim::Two, 2);
    let shape = Shape::default_for(Dim::Two);
    let mut draw = |n| (0..n).map(|_| sample_nondegenerate(&cfg, &shape, &mut rng).1).collect::<Vec<_>>();
    let (train, val) = (draw(40), draw(10));
    for mode in [Mode::Plad, Mode::Siri] {
        let mut lc = LoopConfig::new(Dim::Two, mode);
        lc.rounds = 2;
        lc.suite.po.steps = 100;
        let mut src = MemorizingRetriever::pretrained(Dim::Two, 100, 2, 0);
        let history = SiriLoop::new(lc, train.clone(), val.clone(), &mut src).run();
        print!("{}", history.to_csv());
    }
}
