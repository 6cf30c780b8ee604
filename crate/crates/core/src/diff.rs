//! Differentiable execution with respect to raw primitive parameters.
//!
//! The SDF tree is piecewise: at any point exactly one primitive determines the
//! value, reached through a chain of `min`/`max`, negations (subtract) and
//! transform factors. The forward pass records that chain; the backward pass
//! sends the loss adjoint down it to the primitive and through the analytic
//! derivative of its SDF and of the raw-to-geometry parameter maps. Ties between
//! branches send the gradient to the left child.

use crate::ast::{Dim, Expr, ParamRange};
use crate::exec::{soft_value, to_local, CompiledSdf, Node};
use crate::grid::{OccupancyGrid, Shape};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("parameter vector has {got} entries, program expects {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("program dimension does not match the target grid")]
    DimMismatch,
}

/// Gradient of one primitive's SDF at `p` (in the primitive's parent frame)
/// with respect to its raw parameters, scaled by `adjoint` and accumulated
/// into `out`.
pub(crate) fn accumulate_primitive_grad(c: &CompiledSdf, prim: usize, p: [f64; 3], adjoint: f64, out: &mut [f64]) {
    let Node::Prim {
        geo,
        half,
        cos,
        sin,
        offset,
    } = &c.nodes[prim]
    else {
        unreachable!("active branch always ends at a primitive")
    };
    let dim = c.dim;
    let n = dim.axes();
    let q = to_local(dim, geo, *cos, *sin, p);
    let mut g_q = [0.0; 3];
    let mut g_h = [0.0; 3];
    if geo.kind.is_box() {
        let mut dq = [0.0; 3];
        let mut outside = 0.0;
        for a in 0..n {
            dq[a] = q[a].abs() - half[a];
            if dq[a] > 0.0 {
                outside += dq[a] * dq[a];
            }
        }
        let mut g_dq = [0.0; 3];
        if outside > 0.0 {
            let len = outside.sqrt();
            for a in 0..n {
                g_dq[a] = dq[a].max(0.0) / len;
            }
        } else {
            let mut best = 0;
            for a in 1..n {
                if dq[a] > dq[best] {
                    best = a;
                }
            }
            g_dq[best] = 1.0;
        }
        for a in 0..n {
            let sign = if q[a] > 0.0 {
                1.0
            } else if q[a] < 0.0 {
                -1.0
            } else {
                0.0
            };
            g_q[a] = g_dq[a] * sign;
            g_h[a] = -g_dq[a];
        }
    } else {
        let mut k2 = 0.0;
        let mut amin = 0;
        for a in 0..n {
            k2 += (q[a] / half[a]).powi(2);
            if half[a] < half[amin] {
                amin = a;
            }
        }
        let k = k2.sqrt();
        let m = half[amin];
        if k > 0.0 {
            for a in 0..n {
                g_q[a] = m * q[a] / (half[a] * half[a] * k);
                g_h[a] = -m * q[a] * q[a] / (half[a].powi(3) * k);
            }
        }
        g_h[amin] += k - 1.0;
    }

    let scale_slope = ParamRange::Scale.slope();
    let g = &mut out[*offset..*offset + dim.primitive_arity()];
    match dim {
        Dim::Two => {
            // q = R(-theta) (p - c): df/dc = -R(theta) g_q, df/dtheta = g_q . (q1, -q0)
            let dc0 = -(cos * g_q[0] - sin * g_q[1]);
            let dc1 = -(sin * g_q[0] + cos * g_q[1]);
            let dtheta = g_q[0] * q[1] - g_q[1] * q[0];
            g[0] += adjoint * dc0;
            g[1] += adjoint * dc1;
            g[2] += adjoint * 0.5 * g_h[0] * scale_slope;
            g[3] += adjoint * 0.5 * g_h[1] * scale_slope;
            g[4] += adjoint * dtheta * ParamRange::Rotation.slope();
        }
        Dim::Three => {
            for a in 0..3 {
                g[a] += adjoint * -g_q[a];
                g[3 + a] += adjoint * 0.5 * g_h[a] * scale_slope;
            }
        }
    }
}

/// Mean squared error between soft occupancy at cell centers and a binary
/// target, with its gradient.
pub struct ReconLoss<'a> {
    target: &'a OccupancyGrid,
    centers: Vec<[f64; 3]>,
}

impl<'a> ReconLoss<'a> {
    pub fn new(target: &'a OccupancyGrid) -> ReconLoss<'a> {
        ReconLoss {
            target,
            centers: target.shape().centers(),
        }
    }

    pub fn shape(&self) -> &Shape {
        self.target.shape()
    }

    /// Loss over all cells; adds d(loss)/d(raw params) into `grad` if given.
    pub fn eval(&self, c: &CompiledSdf, sharpness: f64, grad: Option<&mut [f64]>) -> f64 {
        self.eval_cells(c, sharpness, None, grad)
    }

    /// Loss over `cells` (all cells when `None`).
    pub fn eval_cells(
        &self,
        c: &CompiledSdf,
        sharpness: f64,
        cells: Option<&[usize]>,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let n = cells.map_or(self.centers.len(), |s| s.len());
        if n == 0 {
            return 0.0;
        }
        let inv_n = 1.0 / n as f64;
        let mut total = 0.0;
        let mut one = |i: usize| {
            let p = self.centers[i];
            let t = if self.target.get(i) { 1.0 } else { 0.0 };
            match grad.as_deref_mut() {
                None => {
                    let s = soft_value(c.eval(p), sharpness);
                    total += (s - t) * (s - t);
                }
                Some(g) => {
                    let act = c.eval_active(p);
                    let th = (act.value * sharpness).tanh();
                    let s = crate::exec::sigmoid(-th * sharpness);
                    let r = s - t;
                    total += r * r;
                    let ds_dd = s * (1.0 - s) * -sharpness * (1.0 - th * th) * sharpness;
                    let adj = 2.0 * r * inv_n * ds_dd * act.mult;
                    if adj != 0.0 {
                        accumulate_primitive_grad(c, act.prim, act.local, adj, g);
                    }
                }
            }
        };
        match cells {
            None => (0..self.centers.len()).for_each(&mut one),
            Some(s) => s.iter().copied().for_each(&mut one),
        }
        total * inv_n
    }
}

fn checked(e: &Expr, phi: &[f64], target: &OccupancyGrid) -> Result<CompiledSdf, DiffError> {
    if e.dim() != target.dim() {
        return Err(DiffError::DimMismatch);
    }
    let expected = e.raw_params().len();
    let z = e.with_raw_params(phi).ok_or(DiffError::LayoutMismatch {
        expected,
        got: phi.len(),
    })?;
    Ok(CompiledSdf::new(&z))
}

/// Mean squared error of the soft execution of `e` with parameters `phi`
/// against `target`.
pub fn recon_loss(e: &Expr, phi: &[f64], target: &OccupancyGrid, sharpness: f64) -> Result<f64, DiffError> {
    let c = checked(e, phi, target)?;
    Ok(ReconLoss::new(target).eval(&c, sharpness, None))
}

/// d(recon_loss)/d(phi).
pub fn grad_loss(e: &Expr, phi: &[f64], target: &OccupancyGrid, sharpness: f64) -> Result<Vec<f64>, DiffError> {
    let c = checked(e, phi, target)?;
    let mut g = vec![0.0; phi.len()];
    ReconLoss::new(target).eval(&c, sharpness, Some(&mut g));
    Ok(g)
}

/// Smallest branch gap over the grid's cell centers. Finite differences are
/// only meaningful where this exceeds the step size.
pub fn branch_margin(e: &Expr, shape: &Shape) -> f64 {
    let c = CompiledSdf::new(e);
    (0..shape.len())
        .map(|i| c.eval_active(shape.center(i)).margin)
        .fold(f64::INFINITY, f64::min)
}
