//! Code grafting: replace or add sub-expressions using a cache of
//! sub-expressions seen in other programs.

pub mod cache;
pub mod canon;
pub mod invert;

pub use cache::{CacheConfig, CacheEntry, InsertOutcome, InsertReport, Origin, Rejection, SubexprCache};
pub use canon::{canonicalize, place, simplify, CanonicalForm};
pub use invert::{desired_execution, invert_bool, invert_transform, DesiredExecution, Side, Slot, Ternary};

use std::collections::BTreeMap;

use crate::ast::{Dim, Expr};
use crate::grid::OccupancyGrid;
use crate::metrics::{objective, ObjectiveConfig};
use crate::prune::ExecTree;

#[derive(Debug, thiserror::Error)]
pub enum GraftError {
    #[error("sub-expression executes to nothing and cannot be canonicalized")]
    EmptyExecution,
    #[error("cache is empty")]
    EmptyCache,
    #[error("no node at path {0:?}")]
    InvalidPath(Vec<usize>),
    #[error("cache file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for GraftError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CgConfig {
    /// Candidates retrieved per slot.
    pub k: usize,
    /// Replacements applied per call at most.
    pub max_repl: usize,
    /// Use `not B` as the mask for the left child of a subtract.
    pub strong_diff_mask: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            k: 8,
            max_repl: 4,
            strong_diff_mask: false,
        }
    }
}

/// One candidate edit of `z`.
fn graft_into(z: &Expr, slot: &Slot, part: Expr) -> Expr {
    match slot {
        Slot::Node(path) => z.replace(path, part).expect("slot taken from z"),
        Slot::Empty => Expr::union(z.clone(), part),
    }
}

/// Best strictly improving single graft, as `(program, objective)`.
fn best_graft(x: &OccupancyGrid, z: &Expr, cache: &SubexprCache, obj: &ObjectiveConfig, cfg: &CgConfig, base: f64) -> Option<(Expr, f64)> {
    let dim: Dim = z.dim();
    let tree = ExecTree::build(z, x.shape());
    let mut slots: Vec<Slot> = tree.nodes.iter().map(|n| Slot::Node(n.path.clone())).collect();
    slots.push(Slot::Empty);
    let mut best: Option<(Expr, f64)> = None;
    for slot in &slots {
        let Ok(Some(d)) = invert::desired_execution_in(&tree, slot, x, cfg.strong_diff_mask) else {
            continue;
        };
        let Ok(hits) = cache.knn(&d, cfg.k) else {
            return None;
        };
        for (i, _) in hits {
            let part = cache.entries()[i].canon.refit(&d.frame);
            if part.validate(dim).is_err() {
                continue;
            }
            let cand = graft_into(z, slot, part);
            let o = objective(x, &cand, obj).objective;
            if o > best.as_ref().map_or(base, |b| b.1) {
                best = Some((cand, o));
            }
        }
    }
    best
}

/// Applies up to `max_repl` best strictly improving grafts. Returns the final
/// program only if the objective went up.
pub fn rewrite_cg(x: &OccupancyGrid, z: &Expr, cache: &SubexprCache, obj: &ObjectiveConfig, cfg: &CgConfig) -> Option<Expr> {
    if cache.is_empty() {
        return None;
    }
    let mut cur = z.clone();
    let mut cur_o = objective(x, z, obj).objective;
    let start = cur_o;
    for _ in 0..cfg.max_repl {
        match best_graft(x, &cur, cache, obj, cfg, cur_o) {
            Some((next, o)) => {
                cur = next;
                cur_o = o;
            }
            None => break,
        }
    }
    (cur_o > start).then_some(cur)
}

/// A program considered for shortening, with the shape it should reconstruct.
#[derive(Clone, Debug)]
pub struct ShortenItem<'a> {
    pub expr: Expr,
    pub target: &'a OccupancyGrid,
}

/// Replaces occurrences of rejected duplicates with the preferred entry, put
/// back in the occurrence's frame. A replacement is kept only if the program
/// gets shorter and its objective does not drop. `programs` is keyed by the
/// program ids used when inserting; returns the ids that changed.
pub fn shorten_rewrite(programs: &mut BTreeMap<usize, ShortenItem<'_>>, rejections: &[Rejection], obj: &ObjectiveConfig) -> Vec<usize> {
    let mut changed = Vec::new();
    for r in rejections {
        if r.preferred_length >= r.rejected_length {
            continue;
        }
        for o in &r.origins {
            let Some(item) = programs.get_mut(&o.program) else {
                continue;
            };
            let Some(node) = item.expr.get(&o.path) else {
                continue;
            };
            if node.fingerprint() != o.fingerprint {
                continue;
            }
            let part = r.preferred.refit(&o.frame);
            if part.program_length() >= node.program_length() || part.validate(item.expr.dim()).is_err() {
                continue;
            }
            let cand = item.expr.replace(&o.path, part).expect("path checked");
            if objective(item.target, &cand, obj).objective >= objective(item.target, &item.expr, obj).objective {
                item.expr = cand;
                if !changed.contains(&o.program) {
                    changed.push(o.program);
                }
            }
        }
    }
    changed.sort_unstable();
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::execute_hard;
    use crate::grid::Shape;
    use crate::parse::parse;

    fn p2(s: &str) -> Expr {
        parse(s, Dim::Two).unwrap()
    }

    fn obj() -> ObjectiveConfig {
        ObjectiveConfig::for_dim(Dim::Two)
    }

    #[test]
    fn empty_slot_adds_missing_part() {
        let shape = Shape::default_for(Dim::Two);
        let have = p2("rectangle(-0.4,-0.3,-0.3,0.1,0)");
        let part = p2("ellipse(0.45,0.4,-0.4,-0.2,0)");
        let x = execute_hard(&Expr::union(have.clone(), part.clone()), &shape);
        let mut cache = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        // the part was seen elsewhere, at another place and size
        cache.insert_program(0, &p2("ellipse(-0.2,0.1,0.1,0.3,0)"));
        let out = rewrite_cg(&x, &have, &cache, &obj(), &CgConfig::default()).expect("graft");
        let before = crate::metrics::iou(&x, &execute_hard(&have, &shape)).unwrap();
        let after = crate::metrics::iou(&x, &execute_hard(&out, &shape)).unwrap();
        assert!(after > before, "{before} {after}");
        assert!(objective(&x, &out, &obj()).objective > objective(&x, &have, &obj()).objective);
    }

    #[test]
    fn wrong_branch_is_replaced() {
        let shape = Shape::default_for(Dim::Two);
        let good = p2("union(rectangle(-0.4,0,-0.2,0.2,0), ellipse(0.4,0,-0.3,-0.3,0))");
        let x = execute_hard(&good, &shape);
        // wrong primitive in the right place
        let bad = p2("union(rectangle(-0.4,0,-0.2,0.2,0), rectangle(0.4,0,-0.3,-0.3,0))");
        let mut cache = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        cache.insert_program(0, &p2("ellipse(0,0,0.5,0.5,0)"));
        let one = CgConfig {
            max_repl: 1,
            ..CgConfig::default()
        };
        let out = rewrite_cg(&x, &bad, &cache, &obj(), &one).expect("graft");
        assert!(objective(&x, &out, &obj()).objective > objective(&x, &bad, &obj()).objective);
        // a single graft: the right branch swapped, the left one untouched
        assert_eq!(out.get(&[0]), bad.get(&[0]));
        assert!(matches!(out.get(&[1]), Some(Expr::Primitive { kind: crate::ast::PrimitiveKind::Ellipse, .. })));
    }

    #[test]
    fn useless_cache_changes_nothing() {
        let shape = Shape::default_for(Dim::Two);
        let z = p2("rectangle(0.1,0.1,-0.2,-0.2,0)");
        let x = execute_hard(&z, &shape);
        let mut cache = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        assert!(rewrite_cg(&x, &z, &cache, &obj(), &CgConfig::default()).is_none());
        cache.insert_program(0, &p2("ellipse(0,0,0,0,0)"));
        assert!(rewrite_cg(&x, &z, &cache, &obj(), &CgConfig::default()).is_none());
    }

    #[test]
    fn shorten_replaces_long_equivalent() {
        let shape = Shape::default_for(Dim::Two);
        // the inner union executes exactly like its first rectangle
        let long = p2("union(union(rectangle(-0.5,0.2,-0.6,-0.5,0), rectangle(-0.5,0.2,-0.7,-0.6,0)), ellipse(0.4,-0.3,-0.5,-0.5,0))");
        let x = execute_hard(&long, &shape);
        let mut cache = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        let reports = cache.insert_program(0, &long);
        let rej: Vec<Rejection> = reports.into_iter().flat_map(|r| r.rejections).collect();
        assert!(!rej.is_empty());
        let mut items = BTreeMap::from([(0, ShortenItem { expr: long.clone(), target: &x })]);
        let changed = shorten_rewrite(&mut items, &rej, &obj());
        assert_eq!(changed, vec![0]);
        assert_eq!(items[&0].expr.program_length(), 3);
        let d = execute_hard(&items[&0].expr, &shape).hamming(&x);
        assert!(d < 10, "{d}");
        let mut same = BTreeMap::from([(0, ShortenItem { expr: long.clone(), target: &x })]);
        assert!(shorten_rewrite(&mut same, &[], &obj()).is_empty());
    }
}
