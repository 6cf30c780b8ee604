//! Masked inversion of boolean and transform nodes: given what a node should
//! execute to, derive what one of its children should execute to, and where
//! that is actually determined.

use crate::ast::{BoolOp, Expr, TransformKind};
use crate::grid::{CellBox, Frame, OccupancyGrid, Shape};
use crate::prune::ExecTree;

use super::GraftError;

/// A target grid with a validity mask over the full domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ternary {
    pub target: OccupancyGrid,
    pub valid: OccupancyGrid,
}

impl Ternary {
    pub fn known(target: OccupancyGrid) -> Ternary {
        let valid = OccupancyGrid::full(*target.shape());
        Ternary { target, valid }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Inverts `T = op(A, B)` for the child on `side`; `sibling` is the execution
/// of the other child. With `strong_diff` the left child of a subtract gets
/// the full determined region `not B` instead of `T and not B`.
pub fn invert_bool(op: BoolOp, t: &Ternary, sibling: &OccupancyGrid, side: Side, strong_diff: bool) -> Ternary {
    let tt = &t.target;
    let (target, mask) = match (op, side) {
        (BoolOp::Union, _) => (tt.clone(), tt.intersect(sibling).complement()),
        (BoolOp::Intersect, _) => (tt.clone(), tt.union(sibling)),
        (BoolOp::Subtract, Side::Left) if strong_diff => (tt.clone(), sibling.complement()),
        (BoolOp::Subtract, Side::Left) => (tt.clone(), tt.subtract(sibling)),
        (BoolOp::Subtract, Side::Right) => (tt.complement(), tt.union(sibling)),
    };
    Ternary {
        target,
        valid: t.valid.intersect(&mask),
    }
}

/// Maps a point of the child's space to the parent's space.
fn forward(kind: TransformKind, params: &[f64], q: [f64; 3]) -> [f64; 3] {
    let mut p = q;
    match kind {
        TransformKind::Translate => {
            for (a, v) in params.iter().enumerate() {
                p[a] += v;
            }
        }
        TransformKind::Scale => {
            for (a, v) in params.iter().enumerate() {
                p[a] *= v;
            }
        }
        TransformKind::Rotate2d => {
            let (s, c) = params[0].sin_cos();
            p[0] = c * q[0] - s * q[1];
            p[1] = s * q[0] + c * q[1];
        }
    }
    p
}

/// Pulls a ternary grid back through a transform node by nearest-neighbor
/// lookup. Child cells whose image leaves the domain become invalid.
pub fn invert_transform(kind: TransformKind, params: &[f64], t: &Ternary) -> Ternary {
    let shape = *t.target.shape();
    let axes = shape.dim.axes();
    let mut target = OccupancyGrid::empty(shape);
    let mut valid = OccupancyGrid::empty(shape);
    for i in 0..shape.len() {
        let p = forward(kind, params, shape.center(i));
        let mut ijk = [0usize; 3];
        let mut inside = true;
        for a in 0..axes {
            match Shape::cell_of(p[a], shape.res[a]) {
                Some(c) => ijk[a] = c,
                None => inside = false,
            }
        }
        if inside {
            let j = shape.index(ijk);
            target.set(i, t.target.get(j));
            valid.set(i, t.valid.get(j));
        }
    }
    Ternary { target, valid }
}

/// What a node should execute to, cropped to a box of the full grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DesiredExecution {
    pub target: OccupancyGrid,
    pub valid: OccupancyGrid,
    /// Crop box in full-grid cells.
    pub bbox: CellBox,
    /// The crop box as a continuous frame.
    pub frame: Frame,
    pub full: Shape,
}

impl DesiredExecution {
    /// Crops `t` to `bbox`.
    pub fn crop(t: &Ternary, bbox: CellBox) -> DesiredExecution {
        let full = *t.target.shape();
        let ext = bbox.extent();
        let crop = Shape {
            dim: full.dim,
            res: ext,
        };
        let mut target = OccupancyGrid::empty(crop);
        let mut valid = OccupancyGrid::empty(crop);
        for i in 0..crop.len() {
            let c = crop.coords(i);
            let j = full.index([c[0] + bbox.lo[0], c[1] + bbox.lo[1], c[2] + bbox.lo[2]]);
            target.set(i, t.target.get(j));
            valid.set(i, t.valid.get(j));
        }
        DesiredExecution {
            target,
            valid,
            bbox,
            frame: bbox.frame(&full),
            full,
        }
    }

    /// Full-grid cell for a domain point, clamped into the crop box, as crop
    /// coordinates.
    pub fn crop_cell_of(&self, p: [f64; 3]) -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in 0..self.full.dim.axes() {
            let f = ((p[a] + 1.0) * 0.5 * self.full.res[a] as f64).floor();
            let f = f.clamp(self.bbox.lo[a] as f64, self.bbox.hi[a] as f64) as usize;
            c[a] = f - self.bbox.lo[a];
        }
        c
    }
}

/// Where grafting may happen in a program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Replace the node at this path.
    Node(Vec<usize>),
    /// Add a new part: `union(z, new)`.
    Empty,
}

/// Walks from the root to `path`, inverting each node along the way, and
/// returns the full-grid ternary for the addressed node.
pub fn invert_path(tree: &ExecTree, path: &[usize], x: &OccupancyGrid, strong_diff: bool) -> Result<Ternary, GraftError> {
    let mut t = Ternary::known(x.clone());
    let mut node = tree.root();
    for (depth, &step) in path.iter().enumerate() {
        let bad = || GraftError::InvalidPath(path.to_vec());
        let child = *node.children.get(step).ok_or_else(bad)?;
        t = match &node.expr {
            Expr::Boolean { op, .. } => {
                let sib = &tree.nodes[node.children[1 - step]].grid;
                let side = if step == 0 { Side::Left } else { Side::Right };
                invert_bool(*op, &t, sib, side, strong_diff)
            }
            Expr::Transform { kind, params, .. } => invert_transform(*kind, params, &t),
            Expr::Primitive { .. } => return Err(GraftError::InvalidPath(path[..=depth].to_vec())),
        };
        node = &tree.nodes[child];
    }
    Ok(t)
}

/// Desired execution of a slot, cropped to the node's execution box. Nodes
/// with an empty execution (and the empty slot) use the box of the valid
/// target cells instead. `None` when there is no box at all.
pub fn desired_execution_in(
    tree: &ExecTree,
    slot: &Slot,
    x: &OccupancyGrid,
    strong_diff: bool,
) -> Result<Option<DesiredExecution>, GraftError> {
    let (t, own) = match slot {
        Slot::Node(path) => {
            let t = invert_path(tree, path, x, strong_diff)?;
            let own = tree.find(path).ok_or_else(|| GraftError::InvalidPath(path.clone()))?;
            (t, own.grid.bbox())
        }
        Slot::Empty => {
            let t = invert_bool(BoolOp::Union, &Ternary::known(x.clone()), &tree.root().grid, Side::Right, strong_diff);
            (t, None)
        }
    };
    let bbox = own.or_else(|| t.target.intersect(&t.valid).bbox());
    Ok(bbox.map(|b| DesiredExecution::crop(&t, b)))
}

/// Desired execution for the node of `z` at `path`.
pub fn desired_execution(z: &Expr, path: &[usize], x: &OccupancyGrid) -> Result<Option<DesiredExecution>, GraftError> {
    z.get(path).ok_or_else(|| GraftError::InvalidPath(path.to_vec()))?;
    let tree = ExecTree::build(z, x.shape());
    desired_execution_in(&tree, &Slot::Node(path.to_vec()), x, false)
}
