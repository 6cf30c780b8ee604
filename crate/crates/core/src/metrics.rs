//! Reconstruction metrics and the rewriting objective
//! `O(x, z) = R(x, E(z)) - length_weight * |z|`.

use serde::{Deserialize, Serialize};

use crate::ast::{Dim, Expr};
use crate::exec::execute_hard;
use crate::grid::{GridError, OccupancyGrid};

/// Default length penalty per program command.
pub const DEFAULT_LENGTH_WEIGHT: f64 = 0.015;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recon {
    Iou,
    /// Negated Chamfer distance, so larger is still better.
    NegChamfer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub length_weight: f64,
    pub recon: Recon,
    /// Chamfer value when exactly one of the two grids is empty; `None` uses
    /// the domain diagonal.
    pub chamfer_empty_penalty: Option<f64>,
}

impl ObjectiveConfig {
    /// IoU in 3D, negated Chamfer in 2D.
    pub fn for_dim(dim: Dim) -> ObjectiveConfig {
        ObjectiveConfig {
            length_weight: DEFAULT_LENGTH_WEIGHT,
            recon: match dim {
                Dim::Two => Recon::NegChamfer,
                Dim::Three => Recon::Iou,
            },
            chamfer_empty_penalty: None,
        }
    }

    pub fn with_recon(mut self, recon: Recon) -> ObjectiveConfig {
        self.recon = recon;
        self
    }

    pub fn with_length_weight(mut self, w: f64) -> ObjectiveConfig {
        assert!(w >= 0.0, "length weight must be non-negative");
        self.length_weight = w;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub objective: f64,
    pub recon: f64,
    pub length: usize,
}

impl Score {
    pub fn new(recon: f64, length: usize, cfg: &ObjectiveConfig) -> Score {
        Score {
            objective: recon - cfg.length_weight * length as f64,
            recon,
            length,
        }
    }
}

/// `|a & b| / |a | b|`, and 1 when both are empty.
pub fn iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64, GridError> {
    a.check_same(b)?;
    let inter: usize = a
        .bits()
        .words()
        .iter()
        .zip(b.bits().words())
        .map(|(x, y)| (x & y).count_ones() as usize)
        .sum();
    let uni: usize = a
        .bits()
        .words()
        .iter()
        .zip(b.bits().words())
        .map(|(x, y)| (x | y).count_ones() as usize)
        .sum();
    Ok(if uni == 0 { 1.0 } else { inter as f64 / uni as f64 })
}

/// Mean distance from each point of `from` to its nearest point of `to`, in cells.
fn directed_mean(from: &[[i32; 3]], to: &[[i32; 3]]) -> f64 {
    let mut total = 0.0;
    for p in from {
        let mut best = i64::MAX;
        for q in to {
            let d: i64 = (0..3).map(|a| i64::from(p[a] - q[a]).pow(2)).sum();
            if d < best {
                best = d;
                if d == 0 {
                    break;
                }
            }
        }
        total += (best as f64).sqrt();
    }
    total / from.len() as f64
}

/// Symmetric Chamfer distance between boundary cells (boundary pixels in 2D,
/// surface voxels in 3D), averaged over both directions and scaled by
/// `100 / resolution` per cell.
pub fn chamfer_with(a: &OccupancyGrid, b: &OccupancyGrid, empty_penalty: Option<f64>) -> Result<f64, GridError> {
    a.check_same(b)?;
    let shape = a.shape();
    let res = shape.res[0] as f64;
    let unit = 100.0 / res;
    let to_pts = |g: &OccupancyGrid| -> Vec<[i32; 3]> {
        g.boundary_cells()
            .into_iter()
            .map(|c| [c[0] as i32, c[1] as i32, c[2] as i32])
            .collect()
    };
    let (pa, pb) = (to_pts(a), to_pts(b));
    match (pa.is_empty(), pb.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => {
            let diag = 100.0 * (shape.dim.axes() as f64).sqrt();
            return Ok(empty_penalty.unwrap_or(diag));
        }
        _ => {}
    }
    if a == b {
        return Ok(0.0);
    }
    Ok(0.5 * (directed_mean(&pa, &pb) + directed_mean(&pb, &pa)) * unit)
}

pub fn chamfer(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64, GridError> {
    chamfer_with(a, b, None)
}

/// Reconstruction term for an already executed program.
pub fn recon(x: &OccupancyGrid, exec: &OccupancyGrid, cfg: &ObjectiveConfig) -> Result<f64, GridError> {
    match cfg.recon {
        Recon::Iou => iou(x, exec),
        Recon::NegChamfer => chamfer_with(x, exec, cfg.chamfer_empty_penalty).map(|d| -d),
    }
}

/// Scores an execution of a program with `length` commands.
pub fn score_execution(
    x: &OccupancyGrid,
    exec: &OccupancyGrid,
    length: usize,
    cfg: &ObjectiveConfig,
) -> Result<Score, GridError> {
    Ok(Score::new(recon(x, exec, cfg)?, length, cfg))
}

/// Executes `z` at `x`'s resolution and scores it.
pub fn objective(x: &OccupancyGrid, z: &Expr, cfg: &ObjectiveConfig) -> Score {
    let exec = execute_hard(z, x.shape());
    score_execution(x, &exec, z.program_length(), cfg).expect("execution shares the target's shape")
}
