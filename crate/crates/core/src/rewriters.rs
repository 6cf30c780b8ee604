//! The rewriter family behind one interface.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::Expr;
use crate::graft::{rewrite_cg, CgConfig, SubexprCache};
use crate::grid::OccupancyGrid;
use crate::metrics::ObjectiveConfig;
use crate::po::{rewrite_po, PoConfig};
use crate::prune::{rewrite_cp, CpConfig};
use crate::store::Source;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rewriter {
    PO,
    CP,
    CG,
}

impl Rewriter {
    pub const ALL: [Rewriter; 3] = [Rewriter::PO, Rewriter::CP, Rewriter::CG];

    pub fn name(self) -> &'static str {
        match self {
            Rewriter::PO => "PO",
            Rewriter::CP => "CP",
            Rewriter::CG => "CG",
        }
    }

    pub fn from_name(s: &str) -> Option<Rewriter> {
        Rewriter::ALL.into_iter().find(|r| r.name().eq_ignore_ascii_case(s))
    }

    pub fn source(self) -> Source {
        match self {
            Rewriter::PO => Source::PO,
            Rewriter::CP => Source::CP,
            Rewriter::CG => Source::CG,
        }
    }
}

impl fmt::Display for Rewriter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings for all three rewriters plus the objective they are gated on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewriterSuite {
    pub obj: ObjectiveConfig,
    pub po: PoConfig,
    pub cp: CpConfig,
    pub cg: CgConfig,
}

impl RewriterSuite {
    pub fn new(obj: ObjectiveConfig) -> RewriterSuite {
        RewriterSuite {
            obj,
            po: PoConfig::default(),
            cp: CpConfig::default(),
            cg: CgConfig::default(),
        }
    }

    /// Runs one rewriter. `seed` drives PO's cell subsampling; the others are
    /// deterministic.
    pub fn apply(&self, rw: Rewriter, x: &OccupancyGrid, z: &Expr, cache: &SubexprCache, seed: u64) -> Option<Expr> {
        match rw {
            Rewriter::PO => {
                let po = PoConfig {
                    seed,
                    ..self.po.clone()
                };
                rewrite_po(x, z, &po, &self.obj)
            }
            Rewriter::CP => rewrite_cp(x, z, &self.obj, &self.cp),
            Rewriter::CG => rewrite_cg(x, z, cache, &self.obj, &self.cg),
        }
    }
}
