//! Parameter optimization: Adam over `theta = atanh(phi)` with a rising
//! soft-occupancy sharpness, gated on the hard objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::Expr;
use crate::diff::ReconLoss;
use crate::exec::CompiledSdf;
use crate::grid::OccupancyGrid;
use crate::metrics::{objective, ObjectiveConfig};

/// Largest magnitude a raw parameter may take after the `tanh` map; keeps
/// parameters strictly inside `(-1, 1)` even when `tanh` rounds to one.
const PHI_LIMIT: f64 = 1.0 - 1e-9;

/// Raw primitive parameters of one program, in preorder layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

/// Unbounded reparameterization of a [`ParamVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReparamVector(pub Vec<f64>);

impl ParamVector {
    pub fn of(e: &Expr) -> ParamVector {
        ParamVector(e.raw_params())
    }

    pub fn to_theta(&self) -> ReparamVector {
        ReparamVector(self.0.iter().map(|&p| p.clamp(-PHI_LIMIT, PHI_LIMIT).atanh()).collect())
    }
}

impl ReparamVector {
    pub fn to_phi(&self) -> ParamVector {
        ParamVector(self.0.iter().map(|&t| t.tanh().clamp(-PHI_LIMIT, PHI_LIMIT)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u32,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> AdamState {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoConfig {
    pub steps: usize,
    pub lr: f64,
    pub sharpness_start: f64,
    pub sharpness_end: f64,
    /// Cells sampled per step; `None` uses every cell.
    pub subsample: Option<usize>,
    pub seed: u64,
}

impl Default for PoConfig {
    fn default() -> Self {
        PoConfig {
            steps: 250,
            lr: 0.01,
            sharpness_start: 3.0,
            sharpness_end: 10.0,
            subsample: None,
            seed: 0,
        }
    }
}

impl PoConfig {
    /// `steps` values spaced evenly in log space from start to end.
    pub fn sharpness_schedule(&self) -> Vec<f64> {
        let (a, b) = (self.sharpness_start.ln(), self.sharpness_end.ln());
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.sharpness_start],
            n => (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect(),
        }
    }
}

/// Result of a full optimization run, whether or not it improved anything.
#[derive(Clone, Debug)]
pub struct PoRun {
    pub program: Expr,
    pub losses: Vec<f64>,
}

/// Runs the optimizer and returns the final program with the loss trace.
/// Structure is untouched; only primitive parameters move.
pub fn optimize_params(x: &OccupancyGrid, z: &Expr, cfg: &PoConfig) -> PoRun {
    let phi = ParamVector::of(z);
    if phi.0.is_empty() || cfg.steps == 0 {
        return PoRun {
            program: z.clone(),
            losses: Vec::new(),
        };
    }
    let loss = ReconLoss::new(x);
    let mut theta = phi.to_theta();
    let mut adam = AdamState::new(theta.0.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grad_phi = vec![0.0; theta.0.len()];
    let mut grad_theta = vec![0.0; theta.0.len()];
    let mut cells = Vec::new();
    let mut losses = Vec::with_capacity(cfg.steps);
    for sharpness in cfg.sharpness_schedule() {
        let phi = theta.to_phi();
        let prog = z.with_raw_params(&phi.0).expect("layout preserved");
        let compiled = CompiledSdf::new(&prog);
        grad_phi.iter_mut().for_each(|g| *g = 0.0);
        let l = match cfg.subsample {
            Some(n) => {
                cells.clear();
                cells.extend((0..n).map(|_| rng.gen_range(0..x.len())));
                loss.eval_cells(&compiled, sharpness, Some(&cells), Some(&mut grad_phi))
            }
            None => loss.eval(&compiled, sharpness, Some(&mut grad_phi)),
        };
        losses.push(l);
        for i in 0..grad_theta.len() {
            grad_theta[i] = grad_phi[i] * (1.0 - phi.0[i] * phi.0[i]);
        }
        adam.update(&mut theta.0, &grad_theta);
    }
    let program = z
        .with_raw_params(&theta.to_phi().0)
        .expect("layout preserved");
    PoRun { program, losses }
}

/// The PO rewriter: returns the optimized program only if it strictly improves
/// the objective.
pub fn rewrite_po(x: &OccupancyGrid, z: &Expr, cfg: &PoConfig, obj: &ObjectiveConfig) -> Option<Expr> {
    let before = objective(x, z, obj).objective;
    let run = optimize_params(x, z, cfg);
    let after = objective(x, &run.program, obj).objective;
    (after > before).then_some(run.program)
}
