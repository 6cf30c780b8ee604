//! Code pruning: reroot at the best-scoring node, then drop nodes whose
//! contribution to the execution is nil.

use std::collections::HashSet;

use crate::ast::{BoolOp, Expr, NodePath};
use crate::exec::CompiledSdf;
use crate::grid::{OccupancyGrid, Shape};
use crate::metrics::{objective, score_execution, ObjectiveConfig, Score};

/// Largest tree the exhaustive oracle accepts.
pub const ORACLE_MAX_NODES: usize = 15;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PruneError {
    #[error("program has {0} nodes, the oracle handles at most {ORACLE_MAX_NODES}")]
    TooLarge(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct CpConfig {
    /// Cells a parent may differ from a child and still count as a match.
    pub match_tolerance: usize,
}

#[derive(Clone, Debug)]
pub struct ExecNode {
    pub path: NodePath,
    pub expr: Expr,
    pub grid: OccupancyGrid,
    /// Arena indices of the children.
    pub children: Vec<usize>,
}

/// Every node of a program with the standalone execution of its sub-expression.
/// Nodes are stored in preorder, so index 0 is the root.
#[derive(Clone, Debug)]
pub struct ExecTree {
    pub shape: Shape,
    pub nodes: Vec<ExecNode>,
}

impl ExecTree {
    /// One bottom-up pass: boolean nodes combine their children's SDF samples
    /// with the same min/max the executor uses, so the cached grids agree with
    /// `execute_hard` bit for bit.
    pub fn build(z: &Expr, shape: &Shape) -> ExecTree {
        let centers = shape.centers();
        let mut nodes = Vec::new();
        build_node(z, &mut Vec::new(), &centers, shape, &mut nodes);
        ExecTree { shape: *shape, nodes }
    }

    pub fn root(&self) -> &ExecNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, path: &[usize]) -> Option<&ExecNode> {
        self.nodes.iter().find(|n| n.path == path)
    }
}

fn build_node(e: &Expr, path: &mut NodePath, centers: &[[f64; 3]], shape: &Shape, out: &mut Vec<ExecNode>) -> Vec<f64> {
    let me = out.len();
    out.push(ExecNode {
        path: path.clone(),
        expr: e.clone(),
        grid: OccupancyGrid::empty(*shape),
        children: Vec::new(),
    });
    let sdf: Vec<f64> = match e {
        Expr::Boolean { op, left, right } => {
            let mut kids = Vec::with_capacity(2);
            path.push(0);
            kids.push(out.len());
            let a = build_node(left, path, centers, shape, out);
            path.pop();
            path.push(1);
            kids.push(out.len());
            let b = build_node(right, path, centers, shape, out);
            path.pop();
            out[me].children = kids;
            a.iter()
                .zip(&b)
                .map(|(&a, &b)| match op {
                    BoolOp::Union => a.min(b),
                    BoolOp::Intersect => a.max(b),
                    BoolOp::Subtract => a.max(-b),
                })
                .collect()
        }
        Expr::Transform { child, .. } => {
            path.push(0);
            out[me].children = vec![out.len()];
            build_node(child, path, centers, shape, out);
            path.pop();
            let c = CompiledSdf::new(e);
            centers.iter().map(|&p| c.eval(p)).collect()
        }
        Expr::Primitive { .. } => {
            let c = CompiledSdf::new(e);
            centers.iter().map(|&p| c.eval(p)).collect()
        }
    };
    out[me].grid = OccupancyGrid::from_fn(*shape, |i| sdf[i] < 0.0);
    sdf
}

/// `true` when `a` scores strictly better than `b` under the tie rule:
/// higher objective, then shorter program. Earlier candidates win full ties.
fn better(a: &Score, b: &Score) -> bool {
    a.objective > b.objective || (a.objective == b.objective && a.length < b.length)
}

/// Sub-expression of the node with the highest objective.
pub fn top_down_reroot(t: &ExecTree, x: &OccupancyGrid, cfg: &ObjectiveConfig) -> Expr {
    let mut best: Option<(Score, usize)> = None;
    for (i, n) in t.nodes.iter().enumerate() {
        let s = score_execution(x, &n.grid, n.expr.program_length(), cfg).expect("tree built at the target's shape");
        if best.as_ref().is_none_or(|(b, _)| better(&s, b)) {
            best = Some((s, i));
        }
    }
    t.nodes[best.expect("tree has a root").1].expr.clone()
}

fn matches(a: &OccupancyGrid, b: &OccupancyGrid, tol: usize) -> bool {
    if tol == 0 {
        a == b
    } else {
        a.hamming(b) <= tol
    }
}

fn prune_node(t: &ExecTree, i: usize, tol: usize) -> Option<Expr> {
    let n = &t.nodes[i];
    if !n.grid.bits().any() {
        return None;
    }
    match &n.expr {
        Expr::Primitive { .. } => Some(n.expr.clone()),
        Expr::Transform { kind, params, .. } => {
            prune_node(t, n.children[0], tol).map(|c| Expr::transform(*kind, params.clone(), c))
        }
        Expr::Boolean { op, .. } => {
            let (li, ri) = (n.children[0], n.children[1]);
            let l = prune_node(t, li, tol);
            let r = prune_node(t, ri, tol);
            let (l, r) = match (op, l, r) {
                (BoolOp::Union, Some(a), None) | (BoolOp::Subtract, Some(a), None) => return Some(a),
                (BoolOp::Union, None, Some(b)) => return Some(b),
                (_, Some(a), Some(b)) => (a, b),
                _ => return None,
            };
            if matches(&n.grid, &t.nodes[li].grid, tol) {
                Some(l)
            } else if *op != BoolOp::Subtract && matches(&n.grid, &t.nodes[ri].grid, tol) {
                Some(r)
            } else {
                Some(Expr::boolean(*op, l, r))
            }
        }
    }
}

/// Removes empty nodes and siblings made redundant by an equal child
/// execution, repeating until nothing changes. `None` is the empty program.
pub fn bottom_up_prune(z: &Expr, shape: &Shape, cp: &CpConfig) -> Option<Expr> {
    let mut cur = z.clone();
    loop {
        let t = ExecTree::build(&cur, shape);
        let next = prune_node(&t, 0, cp.match_tolerance)?;
        if next == cur {
            return Some(cur);
        }
        cur = next;
    }
}

/// Reroot then prune; the result is returned only if it strictly improves
/// the objective.
pub fn rewrite_cp(x: &OccupancyGrid, z: &Expr, cfg: &ObjectiveConfig, cp: &CpConfig) -> Option<Expr> {
    let t = ExecTree::build(z, x.shape());
    let before = score_execution(x, &t.root().grid, z.program_length(), cfg)
        .expect("same shape")
        .objective;
    let rerooted = top_down_reroot(&t, x, cfg);
    let pruned = bottom_up_prune(&rerooted, x.shape(), cp)?;
    (objective(x, &pruned, cfg).objective > before).then_some(pruned)
}

/// Programs obtained from `e` by repeatedly replacing boolean nodes with one
/// of their children, `e` itself included. Deduplicated, in discovery order.
pub fn promotions(e: &Expr) -> Vec<Expr> {
    let mut out = match e {
        Expr::Primitive { .. } => vec![e.clone()],
        Expr::Transform { kind, params, child } => promotions(child)
            .into_iter()
            .map(|c| Expr::transform(*kind, params.clone(), c))
            .collect(),
        Expr::Boolean { op, left, right } => {
            let (ls, rs) = (promotions(left), promotions(right));
            let mut v = Vec::with_capacity(ls.len() * rs.len() + ls.len() + rs.len());
            for l in &ls {
                for r in &rs {
                    v.push(Expr::boolean(*op, l.clone(), r.clone()));
                }
            }
            v.extend(ls);
            v.extend(rs);
            v
        }
    };
    dedup(&mut out);
    out
}

fn dedup(v: &mut Vec<Expr>) {
    let mut seen = HashSet::new();
    v.retain(|e| seen.insert(e.to_string()));
}

/// The full sub-program space: any node as root, then any promotions below it.
pub fn subprogram_space(z: &Expr) -> Vec<Expr> {
    let mut out: Vec<Expr> = z.nodes().into_iter().flat_map(|(_, n)| promotions(n)).collect();
    dedup(&mut out);
    out
}

/// Membership test against [`subprogram_space`], by printed form.
pub fn in_subprogram_space(z: &Expr, candidate: &Expr) -> bool {
    let text = candidate.to_string();
    subprogram_space(z).iter().any(|e| e.to_string() == text)
}

/// Exhaustive search over the sub-program space with the same tie rule as the
/// greedy passes.
pub fn oracle_cp(x: &OccupancyGrid, z: &Expr, cfg: &ObjectiveConfig) -> Result<Expr, PruneError> {
    let n = z.program_length();
    if n > ORACLE_MAX_NODES {
        return Err(PruneError::TooLarge(n));
    }
    let mut best: Option<(Score, Expr)> = None;
    for cand in subprogram_space(z) {
        let s = objective(x, &cand, cfg);
        if best.as_ref().is_none_or(|(b, _)| better(&s, b)) {
            best = Some((s, cand));
        }
    }
    Ok(best.expect("space contains z").1)
}
