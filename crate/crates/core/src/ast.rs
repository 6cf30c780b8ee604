//! CSG program representation.
//!
//! Programs are binary expression trees over parameterized primitives. Primitive
//! parameters live in the raw `(-1, 1)` box and are mapped to geometry on demand
//! (see [`ParamRange`]), so gradient-based fitting can work in a uniform space.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Spatial dimensionality of a program. Every node of one program shares it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn axes(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Raw parameter count of a primitive in this dimension.
    pub fn primitive_arity(self) -> usize {
        match self {
            Dim::Two => 5,
            Dim::Three => 6,
        }
    }

    /// Evaluation resolution per axis (64² in 2D, 32³ in 3D).
    pub fn default_resolution(self) -> usize {
        match self {
            Dim::Two => 64,
            Dim::Three => 32,
        }
    }

    pub fn from_axes(axes: usize) -> Option<Dim> {
        match axes {
            2 => Some(Dim::Two),
            3 => Some(Dim::Three),
            _ => None,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.axes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Rectangle,
    Ellipse,
    Cuboid,
    Ellipsoid,
}

impl PrimitiveKind {
    pub fn dim(self) -> Dim {
        match self {
            PrimitiveKind::Rectangle | PrimitiveKind::Ellipse => Dim::Two,
            PrimitiveKind::Cuboid | PrimitiveKind::Ellipsoid => Dim::Three,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Rectangle => "rectangle",
            PrimitiveKind::Ellipse => "ellipse",
            PrimitiveKind::Cuboid => "cuboid",
            PrimitiveKind::Ellipsoid => "ellipsoid",
        }
    }

    pub fn from_name(name: &str) -> Option<PrimitiveKind> {
        match name {
            "rectangle" => Some(PrimitiveKind::Rectangle),
            "ellipse" => Some(PrimitiveKind::Ellipse),
            "cuboid" => Some(PrimitiveKind::Cuboid),
            "ellipsoid" => Some(PrimitiveKind::Ellipsoid),
            _ => None,
        }
    }

    /// Box-like primitives (rectangle, cuboid) versus round ones.
    pub fn is_box(self) -> bool {
        matches!(self, PrimitiveKind::Rectangle | PrimitiveKind::Cuboid)
    }

    pub fn for_dim(dim: Dim) -> [PrimitiveKind; 2] {
        match dim {
            Dim::Two => [PrimitiveKind::Rectangle, PrimitiveKind::Ellipse],
            Dim::Three => [PrimitiveKind::Cuboid, PrimitiveKind::Ellipsoid],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoolOp {
    Union,
    Intersect,
    Subtract,
}

impl BoolOp {
    pub const ALL: [BoolOp; 3] = [BoolOp::Union, BoolOp::Intersect, BoolOp::Subtract];

    pub fn name(self) -> &'static str {
        match self {
            BoolOp::Union => "union",
            BoolOp::Intersect => "intersect",
            BoolOp::Subtract => "subtract",
        }
    }

    pub fn from_name(name: &str) -> Option<BoolOp> {
        match name {
            "union" => Some(BoolOp::Union),
            "intersect" => Some(BoolOp::Intersect),
            "subtract" => Some(BoolOp::Subtract),
            _ => None,
        }
    }
}

/// Transform commands. They never occur in sampled programs; canonicalization
/// and grafting prepend them. Parameters are geometric (not raw): translation
/// offsets, positive per-axis scale factors, and a rotation angle in radians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    Translate,
    Scale,
    Rotate2d,
}

impl TransformKind {
    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Translate => "translate",
            TransformKind::Scale => "scale",
            TransformKind::Rotate2d => "rotate",
        }
    }

    pub fn from_name(name: &str) -> Option<TransformKind> {
        match name {
            "translate" => Some(TransformKind::Translate),
            "scale" => Some(TransformKind::Scale),
            "rotate" => Some(TransformKind::Rotate2d),
            _ => None,
        }
    }

    pub fn arity(self, dim: Dim) -> usize {
        match self {
            TransformKind::Translate | TransformKind::Scale => dim.axes(),
            TransformKind::Rotate2d => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Primitive {
        kind: PrimitiveKind,
        params: Vec<f64>,
    },
    Boolean {
        op: BoolOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Transform {
        kind: TransformKind,
        params: Vec<f64>,
        child: Box<Expr>,
    },
}

/// Address of a node: child indices from the root (0 = left/only child, 1 = right).
pub type NodePath = Vec<usize>;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("primitive {0} is not valid in {1}D programs")]
    WrongDim(&'static str, Dim),
    #[error("{name} expects {expected} parameters, got {got}")]
    Arity {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter {value} of {name} is outside (-1, 1)")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("transform {name} has an invalid parameter {value}")]
    BadTransform { name: &'static str, value: f64 },
    #[error("rotate is only available in 2D programs")]
    RotateIn3d,
    #[error("no node at path {0:?}")]
    InvalidPath(NodePath),
}

impl Expr {
    pub fn primitive(kind: PrimitiveKind, params: Vec<f64>) -> Expr {
        Expr::Primitive { kind, params }
    }

    pub fn boolean(op: BoolOp, left: Expr, right: Expr) -> Expr {
        Expr::Boolean {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn union(left: Expr, right: Expr) -> Expr {
        Expr::boolean(BoolOp::Union, left, right)
    }

    pub fn intersect(left: Expr, right: Expr) -> Expr {
        Expr::boolean(BoolOp::Intersect, left, right)
    }

    pub fn subtract(left: Expr, right: Expr) -> Expr {
        Expr::boolean(BoolOp::Subtract, left, right)
    }

    pub fn transform(kind: TransformKind, params: Vec<f64>, child: Expr) -> Expr {
        Expr::Transform {
            kind,
            params,
            child: Box::new(child),
        }
    }

    /// Dimension of the first primitive in preorder.
    pub fn dim(&self) -> Dim {
        match self {
            Expr::Primitive { kind, .. } => kind.dim(),
            Expr::Boolean { left, .. } => left.dim(),
            Expr::Transform { child, .. } => child.dim(),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Primitive { .. } => Vec::new(),
            Expr::Boolean { left, right, .. } => vec![left, right],
            Expr::Transform { child, .. } => vec![child],
        }
    }

    /// Number of commands in the program: every node counts once, regardless of
    /// how many tokens its parameters take.
    pub fn program_length(&self) -> usize {
        match self {
            Expr::Primitive { .. } => 1,
            Expr::Boolean { left, right, .. } => 1 + left.program_length() + right.program_length(),
            Expr::Transform { child, .. } => 1 + child.program_length(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Primitive { .. } => 0,
            Expr::Boolean { left, right, .. } => 1 + left.depth().max(right.depth()),
            Expr::Transform { child, .. } => 1 + child.depth(),
        }
    }

    pub fn primitive_count(&self) -> usize {
        match self {
            Expr::Primitive { .. } => 1,
            Expr::Boolean { left, right, .. } => left.primitive_count() + right.primitive_count(),
            Expr::Transform { child, .. } => child.primitive_count(),
        }
    }

    /// All nodes in preorder together with their paths.
    pub fn nodes(&self) -> Vec<(NodePath, &Expr)> {
        fn walk<'a>(e: &'a Expr, path: &mut NodePath, out: &mut Vec<(NodePath, &'a Expr)>) {
            out.push((path.clone(), e));
            for (i, c) in e.children().into_iter().enumerate() {
                path.push(i);
                walk(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn get(&self, path: &[usize]) -> Option<&Expr> {
        let mut cur = self;
        for &i in path {
            cur = *cur.children().get(i)?;
        }
        Some(cur)
    }

    /// Copy of `self` with the node at `path` replaced by `replacement`.
    pub fn replace(&self, path: &[usize], replacement: Expr) -> Result<Expr, ExprError> {
        fn go(e: &Expr, path: &[usize], rep: Expr, full: &[usize]) -> Result<Expr, ExprError> {
            let Some((&head, rest)) = path.split_first() else {
                return Ok(rep);
            };
            let bad = || ExprError::InvalidPath(full.to_vec());
            match e {
                Expr::Primitive { .. } => Err(bad()),
                Expr::Boolean { op, left, right } => match head {
                    0 => Ok(Expr::boolean(*op, go(left, rest, rep, full)?, (**right).clone())),
                    1 => Ok(Expr::boolean(*op, (**left).clone(), go(right, rest, rep, full)?)),
                    _ => Err(bad()),
                },
                Expr::Transform {
                    kind,
                    params,
                    child,
                } => match head {
                    0 => Ok(Expr::transform(*kind, params.clone(), go(child, rest, rep, full)?)),
                    _ => Err(bad()),
                },
            }
        }
        go(self, path, replacement, path)
    }

    /// Checks arity, dimension consistency and parameter ranges.
    pub fn validate(&self, dim: Dim) -> Result<(), ExprError> {
        match self {
            Expr::Primitive { kind, params } => {
                if kind.dim() != dim {
                    return Err(ExprError::WrongDim(kind.name(), dim));
                }
                if params.len() != dim.primitive_arity() {
                    return Err(ExprError::Arity {
                        name: kind.name(),
                        expected: dim.primitive_arity(),
                        got: params.len(),
                    });
                }
                for &v in params {
                    if !(v > -1.0 && v < 1.0) {
                        return Err(ExprError::OutOfRange {
                            name: kind.name(),
                            value: v,
                        });
                    }
                }
                Ok(())
            }
            Expr::Boolean { left, right, .. } => {
                left.validate(dim)?;
                right.validate(dim)
            }
            Expr::Transform {
                kind,
                params,
                child,
            } => {
                if *kind == TransformKind::Rotate2d && dim == Dim::Three {
                    return Err(ExprError::RotateIn3d);
                }
                if params.len() != kind.arity(dim) {
                    return Err(ExprError::Arity {
                        name: kind.name(),
                        expected: kind.arity(dim),
                        got: params.len(),
                    });
                }
                for &v in params {
                    let ok = v.is_finite() && (*kind != TransformKind::Scale || v > 0.0);
                    if !ok {
                        return Err(ExprError::BadTransform {
                            name: kind.name(),
                            value: v,
                        });
                    }
                }
                child.validate(dim)
            }
        }
    }

    /// Raw primitive parameters in preorder, concatenated. Transform parameters
    /// are geometric and are not part of this vector.
    pub fn raw_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_primitives(&mut |_, p| out.extend_from_slice(p));
        out
    }

    /// Copy of `self` with primitive parameters taken from `phi` (same layout as
    /// [`Expr::raw_params`]).
    pub fn with_raw_params(&self, phi: &[f64]) -> Option<Expr> {
        fn go(e: &Expr, phi: &[f64], at: &mut usize) -> Option<Expr> {
            Some(match e {
                Expr::Primitive { kind, params } => {
                    let n = params.len();
                    let slice = phi.get(*at..*at + n)?;
                    *at += n;
                    Expr::primitive(*kind, slice.to_vec())
                }
                Expr::Boolean { op, left, right } => {
                    Expr::boolean(*op, go(left, phi, at)?, go(right, phi, at)?)
                }
                Expr::Transform {
                    kind,
                    params,
                    child,
                } => Expr::transform(*kind, params.clone(), go(child, phi, at)?),
            })
        }
        let mut at = 0;
        let out = go(self, phi, &mut at)?;
        (at == phi.len()).then_some(out)
    }

    fn visit_primitives<'a>(&'a self, f: &mut dyn FnMut(PrimitiveKind, &'a [f64])) {
        match self {
            Expr::Primitive { kind, params } => f(*kind, params),
            Expr::Boolean { left, right, .. } => {
                left.visit_primitives(f);
                right.visit_primitives(f);
            }
            Expr::Transform { child, .. } => child.visit_primitives(f),
        }
    }

    /// Geometry-space parameters of every primitive, in preorder.
    pub fn map_params(&self) -> Vec<PrimitiveGeometry> {
        let mut out = Vec::new();
        self.visit_primitives(&mut |kind, p| out.push(PrimitiveGeometry::from_raw(kind, p)));
        out
    }

    /// Stable 64-bit fingerprint of the printed program (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let text = self.to_string();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parse::print(self))
    }
}

/// Linear maps from the raw `(-1, 1)` box to geometric ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRange {
    /// Identity on `(-1, 1)`.
    Translate,
    /// `(-1, 1)` to `(0.01, 2.01)`: the full side length / diameter.
    Scale,
    /// `(-1, 1)` to `(-pi, pi)`.
    Rotation,
}

impl ParamRange {
    pub const SCALE_MIN: f64 = 0.01;
    pub const SCALE_MAX: f64 = 2.01;

    pub fn forward(self, raw: f64) -> f64 {
        match self {
            ParamRange::Translate => raw,
            ParamRange::Scale => {
                Self::SCALE_MIN + (raw + 1.0) * 0.5 * (Self::SCALE_MAX - Self::SCALE_MIN)
            }
            ParamRange::Rotation => raw * PI,
        }
    }

    pub fn inverse(self, value: f64) -> f64 {
        match self {
            ParamRange::Translate => value,
            ParamRange::Scale => {
                (value - Self::SCALE_MIN) * 2.0 / (Self::SCALE_MAX - Self::SCALE_MIN) - 1.0
            }
            ParamRange::Rotation => value / PI,
        }
    }

    /// d(forward)/d(raw).
    pub fn slope(self) -> f64 {
        match self {
            ParamRange::Translate => 1.0,
            ParamRange::Scale => 0.5 * (Self::SCALE_MAX - Self::SCALE_MIN),
            ParamRange::Rotation => PI,
        }
    }

    /// Range of the raw parameter at `index` for a primitive of dimension `dim`.
    pub fn for_slot(dim: Dim, index: usize) -> ParamRange {
        let axes = dim.axes();
        if index < axes {
            ParamRange::Translate
        } else if index < 2 * axes {
            ParamRange::Scale
        } else {
            ParamRange::Rotation
        }
    }
}

/// A primitive in geometry space: center, full size per axis, rotation (2D only).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimitiveGeometry {
    pub kind: PrimitiveKind,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub rotation: f64,
}

impl PrimitiveGeometry {
    pub fn from_raw(kind: PrimitiveKind, raw: &[f64]) -> PrimitiveGeometry {
        let dim = kind.dim();
        let axes = dim.axes();
        let mut center = [0.0; 3];
        let mut size = [1.0; 3];
        for a in 0..axes {
            center[a] = ParamRange::Translate.forward(raw[a]);
            size[a] = ParamRange::Scale.forward(raw[axes + a]);
        }
        let rotation = if dim == Dim::Two {
            ParamRange::Rotation.forward(raw[4])
        } else {
            0.0
        };
        PrimitiveGeometry {
            kind,
            center,
            size,
            rotation,
        }
    }

    /// Inverse of [`PrimitiveGeometry::from_raw`]. Values may land outside the
    /// raw box; callers check.
    pub fn to_raw(&self) -> Vec<f64> {
        let dim = self.kind.dim();
        let axes = dim.axes();
        let mut raw = Vec::with_capacity(dim.primitive_arity());
        for a in 0..axes {
            raw.push(ParamRange::Translate.inverse(self.center[a]));
        }
        for a in 0..axes {
            raw.push(ParamRange::Scale.inverse(self.size[a]));
        }
        if dim == Dim::Two {
            raw.push(ParamRange::Rotation.inverse(self.rotation));
        }
        raw
    }

    pub fn half_extent(&self) -> [f64; 3] {
        [self.size[0] * 0.5, self.size[1] * 0.5, self.size[2] * 0.5]
    }
}
