//! Program execution: signed distances, hard occupancy and the soft relaxation.
//!
//! Primitive SDFs are the usual analytic ones for boxes; ellipses and ellipsoids
//! use the sign-correct approximation `(|p / r| - 1) * min(r)`. Booleans combine
//! with `min` / `max` / `max(a, -b)`, so values away from primitive surfaces are
//! bounds rather than exact Euclidean distances, but the sign is always exact.

use crate::ast::{BoolOp, Dim, Expr, PrimitiveGeometry, TransformKind};
use crate::grid::{OccupancyGrid, Shape};

/// Finite query points in `R^dim` (unused trailing coordinates are zero).
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: Dim,
    points: Vec<[f64; 3]>,
}

impl PointSet {
    pub fn new(dim: Dim, points: Vec<[f64; 3]>) -> Option<PointSet> {
        points
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
            .then_some(PointSet { dim, points })
    }

    pub fn grid_centers(shape: &Shape) -> PointSet {
        PointSet {
            dim: shape.dim,
            points: shape.centers(),
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum InvTransform {
    Translate([f64; 3]),
    /// Per-axis factor and the distance correction `min(s)`.
    Scale([f64; 3], f64),
    Rotate { cos: f64, sin: f64 },
}

#[derive(Clone, Debug)]
pub(crate) enum Node {
    Prim {
        geo: PrimitiveGeometry,
        half: [f64; 3],
        cos: f64,
        sin: f64,
        /// Offset of this primitive's raw parameters in the flattened vector.
        offset: usize,
    },
    Bool {
        op: BoolOp,
        left: usize,
        right: usize,
    },
    Xf {
        inv: InvTransform,
        child: usize,
    },
}

/// The branch of the tree that determines the value at one point: the value is
/// `mult * sdf_prim(local)` for the primitive node `prim`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Active {
    pub value: f64,
    pub prim: usize,
    pub mult: f64,
    pub local: [f64; 3],
    /// Smallest gap between competing branches met along the way.
    pub margin: f64,
}

/// An expression flattened into an arena for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledSdf {
    pub(crate) dim: Dim,
    pub(crate) nodes: Vec<Node>,
    pub(crate) root: usize,
    pub(crate) param_count: usize,
}

impl CompiledSdf {
    pub fn new(e: &Expr) -> CompiledSdf {
        let mut c = CompiledSdf {
            dim: e.dim(),
            nodes: Vec::new(),
            root: 0,
            param_count: 0,
        };
        c.root = c.push(e);
        c
    }

    fn push(&mut self, e: &Expr) -> usize {
        let node = match e {
            Expr::Primitive { kind, params } => {
                let geo = PrimitiveGeometry::from_raw(*kind, params);
                let offset = self.param_count;
                self.param_count += params.len();
                Node::Prim {
                    geo,
                    half: geo.half_extent(),
                    cos: geo.rotation.cos(),
                    sin: geo.rotation.sin(),
                    offset,
                }
            }
            Expr::Boolean { op, left, right } => {
                let l = self.push(left);
                let r = self.push(right);
                Node::Bool {
                    op: *op,
                    left: l,
                    right: r,
                }
            }
            Expr::Transform {
                kind,
                params,
                child,
            } => {
                let c = self.push(child);
                let inv = match kind {
                    TransformKind::Translate => {
                        let mut t = [0.0; 3];
                        t[..params.len()].copy_from_slice(params);
                        InvTransform::Translate(t)
                    }
                    TransformKind::Scale => {
                        let mut s = [1.0; 3];
                        s[..params.len()].copy_from_slice(params);
                        let m = params.iter().cloned().fold(f64::INFINITY, f64::min);
                        InvTransform::Scale(s, m)
                    }
                    TransformKind::Rotate2d => InvTransform::Rotate {
                        cos: params[0].cos(),
                        sin: params[0].sin(),
                    },
                };
                Node::Xf { inv, child: c }
            }
        };
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    #[inline]
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.eval_node(self.root, p)
    }

    fn eval_node(&self, n: usize, p: [f64; 3]) -> f64 {
        match &self.nodes[n] {
            Node::Prim {
                geo,
                half,
                cos,
                sin,
                ..
            } => primitive_sdf(self.dim, geo, half, *cos, *sin, p),
            Node::Bool { op, left, right } => {
                let a = self.eval_node(*left, p);
                let b = self.eval_node(*right, p);
                match op {
                    BoolOp::Union => a.min(b),
                    BoolOp::Intersect => a.max(b),
                    BoolOp::Subtract => a.max(-b),
                }
            }
            Node::Xf { inv, child } => {
                let (q, f) = apply_inverse(inv, p);
                self.eval_node(*child, q) * f
            }
        }
    }

    /// Evaluates and records the active branch. Ties go to the left child.
    pub(crate) fn eval_active(&self, p: [f64; 3]) -> Active {
        self.active_node(self.root, p)
    }

    fn active_node(&self, n: usize, p: [f64; 3]) -> Active {
        match &self.nodes[n] {
            Node::Prim {
                geo,
                half,
                cos,
                sin,
                ..
            } => {
                let (value, margin) = primitive_sdf_margin(self.dim, geo, half, *cos, *sin, p);
                Active {
                    value,
                    prim: n,
                    mult: 1.0,
                    local: p,
                    margin,
                }
            }
            Node::Bool { op, left, right } => {
                let a = self.active_node(*left, p);
                let mut b = self.active_node(*right, p);
                if *op == BoolOp::Subtract {
                    b.value = -b.value;
                    b.mult = -b.mult;
                }
                let take_left = match op {
                    BoolOp::Union => a.value <= b.value,
                    BoolOp::Intersect | BoolOp::Subtract => a.value >= b.value,
                };
                let gap = (a.value - b.value).abs();
                let mut out = if take_left { a } else { b };
                out.margin = out.margin.min(gap);
                out
            }
            Node::Xf { inv, child } => {
                let (q, f) = apply_inverse(inv, p);
                let mut a = self.active_node(*child, q);
                a.value *= f;
                a.mult *= f;
                a
            }
        }
    }

    pub fn execute(&self, shape: &Shape) -> OccupancyGrid {
        let mut g = OccupancyGrid::empty(*shape);
        for i in 0..shape.len() {
            if self.eval(shape.center(i)) < 0.0 {
                g.set(i, true);
            }
        }
        g
    }
}

#[inline]
fn apply_inverse(inv: &InvTransform, p: [f64; 3]) -> ([f64; 3], f64) {
    match inv {
        InvTransform::Translate(t) => ([p[0] - t[0], p[1] - t[1], p[2] - t[2]], 1.0),
        InvTransform::Scale(s, m) => ([p[0] / s[0], p[1] / s[1], p[2] / s[2]], *m),
        InvTransform::Rotate { cos, sin } => (
            [cos * p[0] + sin * p[1], -sin * p[0] + cos * p[1], p[2]],
            1.0,
        ),
    }
}

/// Point relative to the primitive center, rotated into its local frame.
#[inline]
pub(crate) fn to_local(dim: Dim, geo: &PrimitiveGeometry, cos: f64, sin: f64, p: [f64; 3]) -> [f64; 3] {
    let d = [p[0] - geo.center[0], p[1] - geo.center[1], p[2] - geo.center[2]];
    match dim {
        Dim::Two => [cos * d[0] + sin * d[1], -sin * d[0] + cos * d[1], 0.0],
        Dim::Three => d,
    }
}

#[inline]
fn primitive_sdf(dim: Dim, geo: &PrimitiveGeometry, half: &[f64; 3], cos: f64, sin: f64, p: [f64; 3]) -> f64 {
    let q = to_local(dim, geo, cos, sin, p);
    let n = dim.axes();
    if geo.kind.is_box() {
        box_sdf(&q[..n], &half[..n])
    } else {
        ellipsoid_sdf(&q[..n], &half[..n])
    }
}

/// SDF plus the gap that keeps the local gradient formula stable (the two
/// largest inner coordinates of a box, or the normalized radius of an ellipse).
fn primitive_sdf_margin(
    dim: Dim,
    geo: &PrimitiveGeometry,
    half: &[f64; 3],
    cos: f64,
    sin: f64,
    p: [f64; 3],
) -> (f64, f64) {
    let q = to_local(dim, geo, cos, sin, p);
    let n = dim.axes();
    if geo.kind.is_box() {
        let mut d = [0.0; 3];
        for a in 0..n {
            d[a] = q[a].abs() - half[a];
        }
        let mut margin = f64::INFINITY;
        if d[..n].iter().all(|&v| v <= 0.0) {
            let mut sorted = d[..n].to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            margin = sorted[0] - sorted[1];
        }
        for a in 0..n {
            margin = margin.min(q[a].abs());
        }
        (box_sdf(&q[..n], &half[..n]), margin)
    } else {
        let k: f64 = (0..n).map(|a| (q[a] / half[a]).powi(2)).sum::<f64>().sqrt();
        // min(r) switches axis where two radii tie
        let mut radii = half[..n].to_vec();
        radii.sort_by(f64::total_cmp);
        (ellipsoid_sdf(&q[..n], &half[..n]), k.min(radii[1] - radii[0]))
    }
}

#[inline]
pub(crate) fn box_sdf(q: &[f64], half: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::NEG_INFINITY;
    for a in 0..q.len() {
        let d = q[a].abs() - half[a];
        if d > 0.0 {
            outside += d * d;
        }
        inside = inside.max(d);
    }
    outside.sqrt() + inside.min(0.0)
}

#[inline]
pub(crate) fn ellipsoid_sdf(q: &[f64], r: &[f64]) -> f64 {
    let mut k2 = 0.0;
    let mut rmin = f64::INFINITY;
    for a in 0..q.len() {
        k2 += (q[a] / r[a]).powi(2);
        rmin = rmin.min(r[a]);
    }
    (k2.sqrt() - 1.0) * rmin
}

/// Signed distance of the program at each point (negative inside).
pub fn sdf_eval(e: &Expr, pts: &PointSet) -> Vec<f64> {
    let c = CompiledSdf::new(e);
    pts.points().iter().map(|&p| c.eval(p)).collect()
}

/// Hard execution: a cell is occupied iff the SDF at its center is negative.
pub fn execute_hard(e: &Expr, shape: &Shape) -> OccupancyGrid {
    CompiledSdf::new(e).execute(shape)
}

/// Executes at the dimension's default resolution.
pub fn execute(e: &Expr) -> OccupancyGrid {
    execute_hard(e, &Shape::default_for(e.dim()))
}

/// Soft occupancy values `sigmoid(-tanh(sdf * k) * k)` for sharpness `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftOccupancy {
    pub values: Vec<f64>,
    pub sharpness: f64,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn soft_value(sdf: f64, sharpness: f64) -> f64 {
    sigmoid(-(sdf * sharpness).tanh() * sharpness)
}

pub fn soft_occupancy(sdf_values: &[f64], sharpness: f64) -> SoftOccupancy {
    assert!(sharpness > 0.0, "sharpness must be positive");
    SoftOccupancy {
        values: sdf_values.iter().map(|&d| soft_value(d, sharpness)).collect(),
        sharpness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::PrimitiveKind;
    use crate::parse::parse;
    use crate::sampler::{sample_program, SamplerConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts2(v: &[[f64; 2]]) -> PointSet {
        PointSet::new(Dim::Two, v.iter().map(|p| [p[0], p[1], 0.0]).collect()).unwrap()
    }

    #[test]
    fn interior_is_negative() {
        let e = parse("rectangle(0,0,0,0,0)", Dim::Two).unwrap();
        let d = sdf_eval(&e, &pts2(&[[0.0, 0.0]]));
        assert!(d[0] < 0.0);
        assert!((d[0] + 0.505).abs() < 1e-12);
    }

    /// Distance from p to the boundary of the primitive, by dense sampling.
    fn brute_boundary_distance(geo: &PrimitiveGeometry, p: [f64; 2]) -> f64 {
        let h = geo.half_extent();
        let (c, s) = (geo.rotation.cos(), geo.rotation.sin());
        let mut best = f64::INFINITY;
        let n = 20000;
        for i in 0..n {
            let t = i as f64 / n as f64;
            let local = if geo.kind.is_box() {
                // walk the perimeter
                let per = 4.0 * t;
                match per as usize {
                    0 => [-h[0] + 2.0 * h[0] * per.fract(), -h[1]],
                    1 => [h[0], -h[1] + 2.0 * h[1] * per.fract()],
                    2 => [h[0] - 2.0 * h[0] * per.fract(), h[1]],
                    _ => [-h[0], h[1] - 2.0 * h[1] * per.fract()],
                }
            } else {
                let a = t * std::f64::consts::TAU;
                [h[0] * a.cos(), h[1] * a.sin()]
            };
            let w = [
                geo.center[0] + c * local[0] - s * local[1],
                geo.center[1] + s * local[0] + c * local[1],
            ];
            best = best.min(((w[0] - p[0]).powi(2) + (w[1] - p[1]).powi(2)).sqrt());
        }
        best
    }

    #[test]
    fn far_points_approximate_surface_distance() {
        let e = parse(
            "union(rectangle(-0.4,0.1,-0.5,-0.2,0.1), ellipse(0.4,-0.3,-0.5,-0.5,0))",
            Dim::Two,
        )
        .unwrap();
        let geos = e.map_params();
        for p in [[0.95, 0.95], [-0.95, -0.9], [0.9, -0.95], [-0.95, 0.95]] {
            let d = sdf_eval(&e, &pts2(&[p]))[0];
            let truth = geos
                .iter()
                .map(|g| brute_boundary_distance(g, p))
                .fold(f64::INFINITY, f64::min);
            assert!(d > 0.0);
            assert!((d - truth).abs() <= 0.1 * truth, "sdf {d} vs brute {truth} at {p:?}");
        }
    }

    #[test]
    fn self_subtraction_is_empty() {
        let a = parse("ellipse(0.1,0.2,0.3,0.1,0.2)", Dim::Two).unwrap();
        let e = Expr::subtract(a.clone(), a);
        let shape = Shape::default_for(Dim::Two);
        let pts = PointSet::grid_centers(&shape);
        assert!(sdf_eval(&e, &pts).iter().all(|&d| d >= 0.0));
        assert!(execute_hard(&e, &shape).is_empty());
    }

    #[test]
    fn covering_rectangle_fills_grid() {
        let e = parse("rectangle(0,0,0.999,0.999,0)", Dim::Two).unwrap();
        let g = execute(&e);
        assert_eq!(g.count(), 64 * 64);
        let c = parse("cuboid(0,0,0,0.999,0.999,0.999)", Dim::Three).unwrap();
        assert_eq!(execute(&c).count(), 32 * 32 * 32);
    }

    #[test]
    fn rectangle_area_matches_analytic() {
        // width 0.81 and height 1.21 in a domain of area 4
        let e = parse("rectangle(0.1,-0.2,-0.2,0.2,0)", Dim::Two).unwrap();
        let g = execute(&e);
        let analytic = 0.81 * 1.21 / 4.0 * 4096.0;
        let got = g.count() as f64;
        assert!((got - analytic).abs() <= 0.15 * analytic, "{got} vs {analytic}");
    }

    /// Independent membership test built from the geometry directly.
    fn member(e: &Expr, p: [f64; 3]) -> bool {
        match e {
            Expr::Primitive { kind, params } => {
                let g = PrimitiveGeometry::from_raw(*kind, params);
                let h = g.half_extent();
                let n = kind.dim().axes();
                let mut d = [p[0] - g.center[0], p[1] - g.center[1], p[2] - g.center[2]];
                if n == 2 {
                    let (c, s) = (g.rotation.cos(), g.rotation.sin());
                    d = [c * d[0] + s * d[1], -s * d[0] + c * d[1], 0.0];
                }
                if kind.is_box() {
                    (0..n).all(|a| d[a].abs() < h[a])
                } else {
                    (0..n).map(|a| (d[a] / h[a]).powi(2)).sum::<f64>() < 1.0
                }
            }
            Expr::Boolean { op, left, right } => {
                let (a, b) = (member(left, p), member(right, p));
                match op {
                    BoolOp::Union => a || b,
                    BoolOp::Intersect => a && b,
                    BoolOp::Subtract => a && !b,
                }
            }
            Expr::Transform { .. } => unreachable!("sampled programs carry no transforms"),
        }
    }

    #[test]
    fn execution_matches_membership_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [Dim::Two, Dim::Three] {
            let shape = Shape::default_for(dim);
            let cfg = SamplerConfig::new(dim, 3);
            for _ in 0..20 {
                let e = sample_program(&cfg, &mut rng);
                let g = execute_hard(&e, &shape);
                let mut mismatches = 0;
                for i in 0..shape.len() {
                    if g.get(i) != member(&e, shape.center(i)) {
                        mismatches += 1;
                    }
                }
                assert_eq!(mismatches, 0, "{e}");
            }
        }
    }

    #[test]
    fn grid_boolean_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = Shape::default_for(Dim::Two);
        let cfg = SamplerConfig::new(Dim::Two, 1);
        for _ in 0..30 {
            let a = sample_program(&cfg, &mut rng);
            let b = sample_program(&cfg, &mut rng);
            let (ga, gb) = (execute_hard(&a, &shape), execute_hard(&b, &shape));
            assert_eq!(execute_hard(&Expr::union(a.clone(), b.clone()), &shape), ga.union(&gb));
            assert_eq!(execute_hard(&Expr::intersect(a.clone(), b.clone()), &shape), ga.intersect(&gb));
            assert_eq!(execute_hard(&Expr::subtract(a, b), &shape), ga.subtract(&gb));
        }
    }

    #[test]
    fn transforms_move_and_scale() {
        let shape = Shape::default_for(Dim::Two);
        let base = Expr::primitive(PrimitiveKind::Rectangle, vec![0.0, 0.0, -0.5, -0.5, 0.0]);
        let moved = Expr::transform(TransformKind::Translate, vec![0.25, 0.0], base.clone());
        let expect = Expr::primitive(PrimitiveKind::Rectangle, vec![0.25, 0.0, -0.5, -0.5, 0.0]);
        assert_eq!(execute_hard(&moved, &shape), execute_hard(&expect, &shape));
        let scaled = Expr::transform(TransformKind::Scale, vec![2.0, 2.0], base);
        let g = execute_hard(&scaled, &shape);
        // width 0.505 doubled
        let cells = (1.01f64 / 2.0 * 64.0).round();
        assert!((g.count() as f64 - cells * cells).abs() <= 2.0 * cells);
    }

    #[test]
    fn soft_occupancy_values() {
        assert_eq!(soft_value(0.0, 3.0), 0.5);
        let v = soft_value(-10.0, 10.0);
        // tanh(100) == 1 in double precision, so this is sigmoid(10)
        assert!((v - 0.9999546021312976).abs() < 1e-12, "{v}");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d: f64 = rng.gen_range(-2.0..2.0);
            let k: f64 = rng.gen_range(0.1..20.0);
            let s = soft_value(d, k);
            assert!(s > 0.0 && s < 1.0);
            if d.abs() > 1e-12 {
                assert_eq!(s > 0.5, d < 0.0);
            }
        }
    }
}
