//! Deduplicated bank of canonical sub-expressions with packed executions.

use std::io::{self, BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{Dim, Expr, NodePath};
use crate::exec::execute_hard;
use crate::grid::{BitVec, Frame, OccupancyGrid, Shape};
use crate::parse::{format_param, parse};
use crate::prune::ExecTree;

use super::canon::{canonicalize_exec, CanonicalForm};
use super::invert::DesiredExecution;
use super::GraftError;

pub const DEFAULT_CAPACITY: usize = 35_000;

/// Entries closer than this (in canonical cells) are duplicates.
pub fn default_threshold(dim: Dim) -> usize {
    match dim {
        Dim::Two => 10,
        Dim::Three => 100,
    }
}

/// Where a cached sub-expression came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Origin {
    pub program: usize,
    pub path: NodePath,
    /// Frame of the occurrence, used to put a replacement back in place.
    pub frame: Frame,
    /// Fingerprint of the occurring sub-expression, to detect stale paths.
    pub fingerprint: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub canon: CanonicalForm,
    pub bits: BitVec,
    pub length: usize,
    pub origins: Vec<Origin>,
}

impl CacheEntry {
    /// Builds an entry from a canonical form, executing it at `canonical`.
    pub fn new(canon: CanonicalForm, canonical: &Shape, origins: Vec<Origin>) -> CacheEntry {
        let bits = execute_hard(&canon.expr, canonical).bits().clone();
        let length = canon.expr.program_length();
        CacheEntry {
            canon,
            bits,
            length,
            origins,
        }
    }
}

/// A duplicate event: occurrences of a longer sub-expression that should be
/// replaced by the preferred one.
#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub origins: Vec<Origin>,
    pub rejected_length: usize,
    pub preferred: CanonicalForm,
    pub preferred_length: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InsertOutcome {
    Appended,
    /// The new entry was a duplicate and no shorter than what is cached.
    Rejected,
    /// The new entry displaced this many longer duplicates.
    Replaced(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InsertReport {
    pub outcome: InsertOutcome,
    pub rejections: Vec<Rejection>,
    /// Entries dropped by capacity subsampling.
    pub evicted: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheConfig {
    pub dim: Dim,
    pub threshold: usize,
    pub capacity: usize,
    pub seed: u64,
}

impl CacheConfig {
    pub fn for_dim(dim: Dim) -> CacheConfig {
        CacheConfig {
            dim,
            threshold: default_threshold(dim),
            capacity: DEFAULT_CAPACITY,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubexprCache {
    pub cfg: CacheConfig,
    pub shape: Shape,
    entries: Vec<CacheEntry>,
    rng: ChaCha8Rng,
}

impl SubexprCache {
    pub fn new(cfg: CacheConfig) -> SubexprCache {
        SubexprCache {
            shape: Shape::default_for(cfg.dim),
            cfg,
            entries: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        }
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts an entry. Every cached entry within the threshold is a
    /// conflict: if the new entry is shorter than all of them it replaces them
    /// all, otherwise it is rejected in favor of the shortest conflict.
    pub fn insert(&mut self, entry: CacheEntry) -> InsertReport {
        let th = self.cfg.threshold;
        let conflicts: Vec<usize> = (0..self.entries.len())
            .filter(|&i| self.entries[i].bits.hamming_bounded(&entry.bits, th) < th)
            .collect();
        let mut report = InsertReport {
            outcome: InsertOutcome::Appended,
            rejections: Vec::new(),
            evicted: 0,
        };
        if let Some(&best) = conflicts.iter().min_by_key(|&&i| (self.entries[i].length, i)) {
            if self.entries[best].length <= entry.length {
                let pref = &mut self.entries[best];
                report.outcome = InsertOutcome::Rejected;
                report.rejections.push(Rejection {
                    origins: entry.origins.clone(),
                    rejected_length: entry.length,
                    preferred: pref.canon.clone(),
                    preferred_length: pref.length,
                });
                pref.origins.extend(entry.origins);
                return report;
            }
            let mut entry = entry;
            for &i in conflicts.iter().rev() {
                let old = self.entries.remove(i);
                report.rejections.push(Rejection {
                    origins: old.origins.clone(),
                    rejected_length: old.length,
                    preferred: entry.canon.clone(),
                    preferred_length: entry.length,
                });
                entry.origins.extend(old.origins);
            }
            report.rejections.reverse();
            report.outcome = InsertOutcome::Replaced(conflicts.len());
            self.entries.push(entry);
        } else {
            self.entries.push(entry);
        }
        report.evicted = self.enforce_capacity();
        report
    }

    /// Drops a uniformly random subset so that at most `capacity` remain,
    /// keeping the survivors in their original order.
    fn enforce_capacity(&mut self) -> usize {
        let n = self.entries.len();
        let cap = self.cfg.capacity;
        if n <= cap {
            return 0;
        }
        let mut keep = sample(&mut self.rng, n, cap).into_vec();
        keep.sort_unstable();
        let mut it = keep.into_iter().peekable();
        let mut i = 0;
        self.entries.retain(|_| {
            let k = it.peek() == Some(&i);
            if k {
                it.next();
            }
            i += 1;
            k
        });
        n - cap
    }

    /// Canonicalizes and inserts every node of `z` with a nonempty execution.
    pub fn insert_program(&mut self, program: usize, z: &Expr) -> Vec<InsertReport> {
        let tree = ExecTree::build(z, &self.shape);
        let mut out = Vec::new();
        for node in &tree.nodes {
            let Ok(canon) = canonicalize_exec(&node.expr, &node.grid) else {
                continue;
            };
            let origin = Origin {
                program,
                path: node.path.clone(),
                frame: canon.frame,
                fingerprint: node.expr.fingerprint(),
            };
            let entry = CacheEntry::new(canon, &self.shape, vec![origin]);
            out.push(self.insert(entry));
        }
        out
    }

    /// Pulls the desired execution into canonical space: each canonical cell
    /// takes the value of the crop cell its image lands in.
    pub fn resample(&self, d: &DesiredExecution) -> (BitVec, BitVec) {
        let s = self.shape;
        let axes = s.dim.axes();
        let mut target = BitVec::zeros(s.len());
        let mut valid = BitVec::zeros(s.len());
        for k in 0..s.len() {
            let u = s.center(k);
            let mut p = [0.0; 3];
            for a in 0..axes {
                p[a] = d.frame.center[a] + d.frame.half[a] * u[a];
            }
            let j = d.target.shape().index(d.crop_cell_of(p));
            target.set(k, d.target.get(j));
            valid.set(k, d.valid.get(j));
        }
        (target, valid)
    }

    /// Masked mismatch count of every entry against `d`.
    pub fn scores(&self, d: &DesiredExecution) -> Vec<usize> {
        let (t, v) = self.resample(d);
        self.entries
            .iter()
            .map(|e| {
                e.bits
                    .words()
                    .iter()
                    .zip(t.words())
                    .zip(v.words())
                    .map(|((a, b), m)| ((a ^ b) & m).count_ones() as usize)
                    .sum()
            })
            .collect()
    }

    /// The `k` best entries as `(index, score)`, ordered by score, then
    /// length, then index.
    pub fn knn(&self, d: &DesiredExecution, k: usize) -> Result<Vec<(usize, usize)>, GraftError> {
        if self.entries.is_empty() {
            return Err(GraftError::EmptyCache);
        }
        let mut ranked: Vec<(usize, usize)> = self.scores(d).into_iter().enumerate().collect();
        let key = |&(i, s): &(usize, usize)| (s, self.entries[i].length, i);
        if k < ranked.len() {
            ranked.select_nth_unstable_by_key(k, key);
            ranked.truncate(k);
        }
        ranked.sort_by_key(key);
        Ok(ranked)
    }

    /// Smallest pairwise distance, by full scan.
    pub fn min_pairwise_distance(&self) -> Option<usize> {
        let mut best = None;
        for i in 0..self.entries.len() {
            for j in i + 1..self.entries.len() {
                let d = self.entries[i].bits.hamming(&self.entries[j].bits);
                best = Some(best.map_or(d, |b: usize| b.min(d)));
            }
        }
        best
    }

    pub fn mean_length(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.length as f64).sum::<f64>() / self.entries.len() as f64
    }

    /// Header line, then one tab-separated line per entry: length, packed
    /// bits, frame center and half extents, canonical program text.
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "CACHE {} {} {} {} {}",
            self.cfg.dim.axes(),
            self.shape.res[0],
            self.cfg.threshold,
            self.cfg.capacity,
            self.entries.len()
        )?;
        let axes = self.cfg.dim.axes();
        for e in &self.entries {
            let frame: Vec<String> = e.canon.frame.center[..axes]
                .iter()
                .chain(&e.canon.frame.half[..axes])
                .map(|&v| format_param(v))
                .collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                e.length,
                B64.encode(e.bits.to_bytes()),
                frame.join(","),
                e.canon.expr
            )?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead, seed: u64) -> Result<SubexprCache, GraftError> {
        let bad = |m: &str| GraftError::Format(m.to_string());
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("missing header"))??;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 6 || f[0] != "CACHE" {
            return Err(bad("bad header"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let dim = Dim::from_axes(num(f[1])?).ok_or_else(|| bad("bad dimension"))?;
        let cfg = CacheConfig {
            dim,
            threshold: num(f[3])?,
            capacity: num(f[4])?,
            seed,
        };
        let count = num(f[5])?;
        let mut cache = SubexprCache::new(cfg);
        if num(f[2])? != cache.shape.res[0] {
            return Err(bad("unsupported resolution"));
        }
        let axes = dim.axes();
        for _ in 0..count {
            let line = lines.next().ok_or_else(|| bad("truncated"))??;
            let parts: Vec<&str> = line.splitn(4, '\t').collect();
            if parts.len() != 4 {
                return Err(bad("bad entry line"));
            }
            let length = num(parts[0])?;
            let bytes = B64.decode(parts[1]).map_err(|_| bad("bad base64"))?;
            let bits = BitVec::from_bytes(&bytes, cache.shape.len()).ok_or_else(|| bad("bad bit length"))?;
            let vals: Vec<f64> = parts[2]
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|_| bad("bad frame")))
                .collect::<Result<_, _>>()?;
            if vals.len() != 2 * axes {
                return Err(bad("bad frame"));
            }
            let mut frame = Frame::UNIT;
            frame.center[..axes].copy_from_slice(&vals[..axes]);
            frame.half[..axes].copy_from_slice(&vals[axes..]);
            let expr = parse(parts[3], dim).map_err(|e| GraftError::Format(e.to_string()))?;
            if expr.program_length() != length {
                return Err(bad("length does not match program"));
            }
            cache.entries.push(CacheEntry {
                canon: CanonicalForm { expr, frame },
                bits,
                length,
                origins: Vec::new(),
            });
        }
        Ok(cache)
    }

    /// Canonical execution of entry `i` as a grid.
    pub fn entry_grid(&self, i: usize) -> OccupancyGrid {
        OccupancyGrid::from_bits(self.shape, self.entries[i].bits.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;
    use crate::sampler::{sample_program, SamplerConfig};
    use super::super::canon::canonicalize;
    use super::super::invert::Ternary;

    fn entry(src: &str, shape: &Shape) -> CacheEntry {
        let e = parse(src, Dim::Two).unwrap();
        CacheEntry::new(canonicalize(&e, shape).unwrap(), shape, Vec::new())
    }

    #[test]
    fn duplicate_rules() {
        let shape = Shape::default_for(Dim::Two);
        let mut c = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        let r = c.insert(entry("rectangle(0.2,0.1,-0.5,-0.3,0)", &shape));
        assert_eq!(r.outcome, InsertOutcome::Appended);
        // same execution, longer program
        let longer = "union(rectangle(0.2,0.1,-0.5,-0.3,0), rectangle(0.2,0.1,-0.6,-0.4,0))";
        let r = c.insert(entry(longer, &shape));
        assert_eq!(r.outcome, InsertOutcome::Rejected);
        assert_eq!(r.rejections[0].preferred_length, 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c.entries()[0].length, 1);

        let mut c = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        c.insert(entry(longer, &shape));
        let r = c.insert(entry("rectangle(0.2,0.1,-0.5,-0.3,0)", &shape));
        assert_eq!(r.outcome, InsertOutcome::Replaced(1));
        assert_eq!(r.rejections[0].rejected_length, 3);
        assert_eq!(c.len(), 1);
        assert_eq!(c.entries()[0].length, 1);

        let r = c.insert(entry("ellipse(0,0,0,0,0)", &shape));
        assert_eq!(r.outcome, InsertOutcome::Appended);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn separation_and_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = CacheConfig {
            capacity: 40,
            ..CacheConfig::for_dim(Dim::Two)
        };
        let mut c = SubexprCache::new(cfg);
        for i in 0..60 {
            let z = sample_program(&SamplerConfig::new(Dim::Two, 2), &mut rng);
            c.insert_program(i, &z);
            assert!(c.len() <= 40);
        }
        assert!(c.min_pairwise_distance().unwrap() >= cfg.threshold);
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut c = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        for i in 0..15 {
            c.insert_program(i, &sample_program(&SamplerConfig::new(Dim::Two, 2), &mut rng));
        }
        let shape = Shape::default_for(Dim::Two);
        let x = execute_hard(&parse("union(rectangle(-0.2,0.1,0,-0.4,0.2), ellipse(0.3,0,-0.5,0,0))", Dim::Two).unwrap(), &shape);
        let mut t = Ternary::known(x.clone());
        t.valid = OccupancyGrid::from_fn(shape, |i| i % 3 != 0);
        let d = DesiredExecution::crop(&t, x.bbox().unwrap());
        let scores = c.scores(&d);
        for (i, e) in c.entries().iter().enumerate() {
            let mut brute = 0;
            for k in 0..shape.len() {
                let u = shape.center(k);
                let p = [
                    d.frame.center[0] + d.frame.half[0] * u[0],
                    d.frame.center[1] + d.frame.half[1] * u[1],
                    0.0,
                ];
                let j = d.target.shape().index(d.crop_cell_of(p));
                if d.valid.get(j) && d.target.get(j) != e.bits.get(k) {
                    brute += 1;
                }
            }
            assert_eq!(scores[i], brute);
        }
        let top = c.knn(&d, 4).unwrap();
        assert_eq!(top.len(), 4.min(c.len()));
        assert!(top.windows(2).all(|w| w[0].1 <= w[1].1));
        // exact match ranks first with score zero; edges on cell edges, so the
        // canonical execution is the resampled target
        let z = parse("rectangle(0.25,-0.25,-0.51,-0.51,0)", Dim::Two).unwrap();
        c.insert_program(99, &z);
        let x = execute_hard(&z, &shape);
        let d = DesiredExecution::crop(&Ternary::known(x.clone()), x.bbox().unwrap());
        let top = c.knn(&d, 1).unwrap();
        assert_eq!(top[0].1, 0);
        // no constraints at all: everything ties and the shortest wins
        let mut t = Ternary::known(x.clone());
        t.valid = OccupancyGrid::empty(shape);
        let d = DesiredExecution::crop(&t, x.bbox().unwrap());
        let top = c.knn(&d, c.len()).unwrap();
        assert!(top.iter().all(|&(_, s)| s == 0));
        assert!(top.windows(2).all(|w| c.entries()[w[0].0].length <= c.entries()[w[1].0].length));
    }

    #[test]
    fn file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut c = SubexprCache::new(CacheConfig::for_dim(Dim::Two));
        for i in 0..5 {
            c.insert_program(i, &sample_program(&SamplerConfig::new(Dim::Two, 2), &mut rng));
        }
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = SubexprCache::read_from(&buf[..], 0).unwrap();
        assert_eq!(back.len(), c.len());
        for (a, b) in back.entries().iter().zip(c.entries()) {
            assert_eq!(a.bits, b.bits);
            assert_eq!(a.length, b.length);
            assert_eq!(execute_hard(&a.canon.expr, &c.shape), execute_hard(&b.canon.expr, &c.shape));
        }
        assert!(SubexprCache::read_from(&b"CACHE 2 64"[..], 0).is_err());
    }
}
