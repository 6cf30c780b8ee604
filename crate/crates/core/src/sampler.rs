//! Grammar sampler for synthetic programs.

use rand::Rng;

use crate::ast::{BoolOp, Dim, Expr, PrimitiveKind};
use crate::exec::execute_hard;
use crate::grid::{OccupancyGrid, Shape};

/// Number of discrete values a sampled parameter can take.
pub const PARAM_BINS: usize = 33;

/// Center of bin `i` of [`PARAM_BINS`] equal bins over `(-1, 1)`.
pub fn bin_value(i: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / PARAM_BINS as f64
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub dim: Dim,
    /// Maximum number of nested boolean levels; 0 yields single primitives.
    pub depth_max: usize,
    /// Probability that a non-root node below the depth limit becomes a leaf.
    pub leaf_prob: f64,
    /// Smallest and largest allowed scale bin, keeping sampled primitives
    /// from collapsing below a cell or swallowing the whole domain.
    pub scale_bins: (usize, usize),
}

impl SamplerConfig {
    pub fn new(dim: Dim, depth_max: usize) -> SamplerConfig {
        SamplerConfig {
            dim,
            depth_max,
            leaf_prob: 0.35,
            scale_bins: (4, 24),
        }
    }
}

fn sample_primitive<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> Expr {
    let kinds = PrimitiveKind::for_dim(cfg.dim);
    let kind = kinds[rng.gen_range(0..kinds.len())];
    let axes = cfg.dim.axes();
    let mut params = Vec::with_capacity(cfg.dim.primitive_arity());
    for _ in 0..axes {
        // keep centers off the outermost bins so primitives stay visible
        params.push(bin_value(rng.gen_range(4..PARAM_BINS - 4)));
    }
    for _ in 0..axes {
        params.push(bin_value(rng.gen_range(cfg.scale_bins.0..=cfg.scale_bins.1)));
    }
    if cfg.dim == Dim::Two {
        params.push(bin_value(rng.gen_range(0..PARAM_BINS)));
    }
    Expr::primitive(kind, params)
}

fn sample_node<R: Rng + ?Sized>(cfg: &SamplerConfig, depth_left: usize, root: bool, rng: &mut R) -> Expr {
    if depth_left == 0 || (!root && rng.gen_bool(cfg.leaf_prob)) {
        return sample_primitive(cfg, rng);
    }
    let op = BoolOp::ALL[rng.gen_range(0..3)];
    let left = sample_node(cfg, depth_left - 1, false, rng);
    let right = sample_node(cfg, depth_left - 1, false, rng);
    Expr::boolean(op, left, right)
}

/// Samples a program whose boolean depth is at most `cfg.depth_max`. Parameters
/// come from the 33-bin grid.
pub fn sample_program<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> Expr {
    sample_node(cfg, cfg.depth_max, true, rng)
}

/// Occupied fraction range outside which a sampled shape counts as degenerate.
pub const OCCUPANCY_RANGE: (f64, f64) = (0.01, 0.99);

pub fn is_degenerate(g: &OccupancyGrid) -> bool {
    let f = g.count() as f64 / g.len() as f64;
    f < OCCUPANCY_RANGE.0 || f > OCCUPANCY_RANGE.1
}

/// Samples until the execution at `shape` is neither (nearly) empty nor full.
pub fn sample_nondegenerate<R: Rng + ?Sized>(cfg: &SamplerConfig, shape: &Shape, rng: &mut R) -> (Expr, OccupancyGrid) {
    loop {
        let z = sample_program(cfg, rng);
        let g = execute_hard(&z, shape);
        if !is_degenerate(&g) {
            return (z, g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bins_are_inside_open_box() {
        assert!(bin_value(0) > -1.0);
        assert!(bin_value(PARAM_BINS - 1) < 1.0);
        assert!(bin_value(16).abs() < 1e-15);
    }

    #[test]
    fn depth_zero_gives_primitives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SamplerConfig::new(Dim::Two, 0);
        for _ in 0..50 {
            assert_eq!(sample_program(&cfg, &mut rng).program_length(), 1);
        }
    }

    #[test]
    fn samples_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [Dim::Two, Dim::Three] {
            let cfg = SamplerConfig::new(dim, 3);
            for _ in 0..200 {
                let e = sample_program(&cfg, &mut rng);
                e.validate(dim).unwrap();
                assert!(e.depth() <= 3);
            }
        }
    }
}
