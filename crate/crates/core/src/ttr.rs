//! Test-time rewriting: greedy interleaved rewriter application with a pool
//! of every improving program seen so far.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ast::Expr;
use crate::graft::SubexprCache;
use crate::grid::OccupancyGrid;
use crate::metrics::{objective, Score};
use crate::rewriters::{Rewriter, RewriterSuite};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtrConfig {
    /// Rounds over the rewriter order.
    pub k: usize,
    pub order: Vec<Rewriter>,
    pub suite: RewriterSuite,
    /// Base seed handed to stochastic rewriters.
    pub seed: u64,
}

impl TtrConfig {
    pub fn new(suite: RewriterSuite) -> TtrConfig {
        TtrConfig {
            k: 3,
            order: Rewriter::ALL.to_vec(),
            suite,
            seed: 0,
        }
    }
}

/// One rewriter application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtrStep {
    pub round: usize,
    pub rewriter: Rewriter,
    /// Fingerprint of the program handed to the rewriter, in hex.
    pub input: String,
    /// The current best program changed.
    pub accepted: bool,
    pub objective_before: f64,
    pub objective_after: f64,
    pub millis: f64,
}

#[derive(Clone, Debug)]
struct PoolItem {
    expr: Expr,
    score: Score,
    fp: u64,
}

/// Session state: the pool of observed programs and what each rewriter has
/// already been given.
#[derive(Clone, Debug)]
pub struct TtrState {
    pool: Vec<PoolItem>,
    best: usize,
    attempted: BTreeMap<Rewriter, HashSet<u64>>,
}

impl TtrState {
    pub fn new(x: &OccupancyGrid, z: &Expr, suite: &RewriterSuite) -> TtrState {
        TtrState {
            pool: vec![PoolItem {
                expr: z.clone(),
                score: objective(x, z, &suite.obj),
                fp: z.fingerprint(),
            }],
            best: 0,
            attempted: BTreeMap::new(),
        }
    }

    pub fn best(&self) -> (&Expr, Score) {
        let b = &self.pool[self.best];
        (&b.expr, b.score)
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn attempted(&self, rw: Rewriter, fp: u64) -> bool {
        self.attempted.get(&rw).is_some_and(|s| s.contains(&fp))
    }

    /// The current best if `rw` has not seen it, else the best-scoring pool
    /// member it has not seen (shorter, then older, on ties).
    pub fn select_input(&self, rw: Rewriter) -> Option<usize> {
        if !self.attempted(rw, self.pool[self.best].fp) {
            return Some(self.best);
        }
        let mut pick: Option<usize> = None;
        for (i, p) in self.pool.iter().enumerate() {
            if self.attempted(rw, p.fp) {
                continue;
            }
            let better = pick.is_none_or(|j| {
                let q = &self.pool[j];
                p.score.objective > q.score.objective
                    || (p.score.objective == q.score.objective && p.score.length < q.score.length)
            });
            if better {
                pick = Some(i);
            }
        }
        pick
    }

    /// Runs one step; `None` when the rewriter has nothing left to try.
    pub fn step(&mut self, x: &OccupancyGrid, rw: Rewriter, cache: &SubexprCache, cfg: &TtrConfig, round: usize) -> Option<TtrStep> {
        let input = self.select_input(rw)?;
        let t0 = Instant::now();
        let before = self.pool[self.best].score.objective;
        let fp = self.pool[input].fp;
        self.attempted.entry(rw).or_default().insert(fp);
        let seed = cfg.seed ^ ((round as u64) << 8 | rw as u64);
        let out = cfg.suite.apply(rw, x, &self.pool[input].expr, cache, seed);
        let mut accepted = false;
        if let Some(z) = out {
            let fpz = z.fingerprint();
            if !self.pool.iter().any(|p| p.fp == fpz) {
                let score = objective(x, &z, &cfg.suite.obj);
                self.pool.push(PoolItem { expr: z, score, fp: fpz });
                if score.objective > before {
                    self.best = self.pool.len() - 1;
                    accepted = true;
                }
            }
        }
        Some(TtrStep {
            round,
            rewriter: rw,
            input: format!("{fp:016x}"),
            accepted,
            objective_before: before,
            objective_after: self.pool[self.best].score.objective,
            millis: t0.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Rewrites `z` for `cfg.k` rounds and returns the best program with the
/// per-step trace.
pub fn ttr_report(x: &OccupancyGrid, z: &Expr, cache: &SubexprCache, cfg: &TtrConfig) -> (Expr, Vec<TtrStep>) {
    let mut st = TtrState::new(x, z, &cfg.suite);
    let mut trace = Vec::new();
    for round in 1..=cfg.k {
        for &rw in &cfg.order {
            if let Some(s) = st.step(x, rw, cache, cfg, round) {
                trace.push(s);
            }
        }
    }
    (st.best().0.clone(), trace)
}

pub fn ttr(x: &OccupancyGrid, z: &Expr, cache: &SubexprCache, cfg: &TtrConfig) -> Expr {
    ttr_report(x, z, cache, cfg).0
}
