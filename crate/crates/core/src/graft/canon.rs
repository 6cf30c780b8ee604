//! Canonical placement of sub-expressions and folding of translate/scale
//! wrappers back into primitives.

use crate::ast::{Dim, Expr, PrimitiveGeometry, TransformKind};
use crate::grid::{Frame, OccupancyGrid, Shape};
use crate::exec::execute_hard;

use super::GraftError;

/// Raw parameters this close to the open boundary are not produced by folding.
const RAW_MARGIN: f64 = 1e-9;

/// A sub-expression wrapped so that its execution fills the unit frame, plus
/// the frame it was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalForm {
    pub expr: Expr,
    pub frame: Frame,
}

impl CanonicalForm {
    /// Places the canonical expression into `frame`.
    pub fn refit(&self, frame: &Frame) -> Expr {
        place(self.expr.dim(), frame.center, frame.half, &self.expr)
    }

    /// The expression back in its original frame.
    pub fn restore(&self) -> Expr {
        self.refit(&self.frame)
    }
}

/// Canonicalizes `e` using its execution at `shape`.
pub fn canonicalize(e: &Expr, shape: &Shape) -> Result<CanonicalForm, GraftError> {
    canonicalize_exec(e, &execute_hard(e, shape))
}

/// Canonicalizes `e` given an execution already computed at some resolution.
pub fn canonicalize_exec(e: &Expr, exec: &OccupancyGrid) -> Result<CanonicalForm, GraftError> {
    let frame = exec.bbox().ok_or(GraftError::EmptyExecution)?.frame(exec.shape());
    let dim = e.dim();
    let mut t = [0.0; 3];
    let mut s = [1.0; 3];
    for a in 0..dim.axes() {
        s[a] = 1.0 / frame.half[a];
        t[a] = -frame.center[a] * s[a];
    }
    Ok(CanonicalForm {
        expr: place(dim, t, s, e),
        frame,
    })
}

/// An expression equivalent to `translate(t, scale(s, e))`, with the wrappers
/// folded into primitives where the result stays in range.
pub fn place(dim: Dim, t: [f64; 3], s: [f64; 3], e: &Expr) -> Expr {
    let axes = dim.axes();
    if t[..axes].iter().all(|&v| v == 0.0) && s[..axes].iter().all(|&v| v == 1.0) && !is_wrapper(e) {
        return e.clone();
    }
    if let Some(f) = fold(dim, t, s, e) {
        return f;
    }
    // merge any wrapper chain directly under the new one
    let (mut t, mut s, mut inner) = (t, s, e);
    loop {
        match inner {
            Expr::Transform {
                kind: TransformKind::Translate,
                params,
                child,
            } => {
                for a in 0..dim.axes() {
                    t[a] += s[a] * params[a];
                }
                inner = child;
            }
            Expr::Transform {
                kind: TransformKind::Scale,
                params,
                child,
            } => {
                for a in 0..dim.axes() {
                    s[a] *= params[a];
                }
                inner = child;
            }
            _ => break,
        }
    }
    let mut out = inner.clone();
    if s[..axes].iter().any(|&v| v != 1.0) {
        out = Expr::transform(TransformKind::Scale, s[..axes].to_vec(), out);
    }
    if t[..axes].iter().any(|&v| v != 0.0) {
        out = Expr::transform(TransformKind::Translate, t[..axes].to_vec(), out);
    }
    out
}

fn is_wrapper(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Transform {
            kind: TransformKind::Translate | TransformKind::Scale,
            ..
        }
    )
}

fn uniform(dim: Dim, s: &[f64; 3]) -> bool {
    s[..dim.axes()].iter().all(|&v| (v - s[0]).abs() <= 1e-12 * s[0].abs())
}

fn fold(dim: Dim, t: [f64; 3], s: [f64; 3], e: &Expr) -> Option<Expr> {
    match e {
        Expr::Primitive { kind, params } => {
            let mut g = PrimitiveGeometry::from_raw(*kind, params);
            if g.rotation != 0.0 && !uniform(dim, &s) {
                return None;
            }
            for a in 0..dim.axes() {
                g.center[a] = t[a] + s[a] * g.center[a];
                g.size[a] *= s[a];
            }
            let raw = g.to_raw();
            raw.iter()
                .all(|v| v.abs() < 1.0 - RAW_MARGIN)
                .then(|| Expr::primitive(*kind, raw))
        }
        Expr::Boolean { op, left, right } => Some(Expr::boolean(
            *op,
            fold(dim, t, s, left)?,
            fold(dim, t, s, right)?,
        )),
        Expr::Transform {
            kind: TransformKind::Translate,
            params,
            child,
        } => {
            let mut t2 = t;
            for a in 0..dim.axes() {
                t2[a] += s[a] * params[a];
            }
            fold(dim, t2, s, child)
        }
        Expr::Transform {
            kind: TransformKind::Scale,
            params,
            child,
        } => {
            let mut s2 = s;
            for a in 0..dim.axes() {
                s2[a] *= params[a];
            }
            fold(dim, t, s2, child)
        }
        Expr::Transform { .. } => None,
    }
}

/// Folds every translate/scale wrapper that can be absorbed.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Primitive { .. } => e.clone(),
        Expr::Boolean { op, left, right } => Expr::boolean(*op, simplify(left), simplify(right)),
        Expr::Transform {
            kind: TransformKind::Rotate2d,
            params,
            child,
        } => Expr::transform(TransformKind::Rotate2d, params.clone(), simplify(child)),
        Expr::Transform { .. } => place(e.dim(), [0.0; 3], [1.0; 3], e),
    }
}
