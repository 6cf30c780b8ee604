//! Best-program store: one entry per (shape, source), improvement gated.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ast::{Dim, Expr};
use crate::grid::OccupancyGrid;
use crate::metrics::{objective, ObjectiveConfig, Score};
use crate::parse::parse;

pub type ShapeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    NS,
    PO,
    CP,
    CG,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::NS, Source::PO, Source::CP, Source::CG];
    pub const REWRITES: [Source; 3] = [Source::PO, Source::CP, Source::CG];

    pub fn name(self) -> &'static str {
        match self {
            Source::NS => "NS",
            Source::PO => "PO",
            Source::CP => "CP",
            Source::CG => "CG",
        }
    }

    pub fn from_name(s: &str) -> Option<Source> {
        Source::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub fn is_rewrite(self) -> bool {
        self != Source::NS
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpEntry {
    pub shape_id: ShapeId,
    pub source: Source,
    pub program: Expr,
    pub score: Score,
    pub round_written: usize,
}

/// How writes are keyed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoreLayout {
    /// One slot per source.
    PerSource,
    /// Every write lands in the NS slot, so each shape has one entry that any
    /// successful rewrite overwrites.
    Single,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug)]
pub struct BpStore {
    targets: Vec<OccupancyGrid>,
    cfg: ObjectiveConfig,
    layout: StoreLayout,
    entries: BTreeMap<(ShapeId, Source), BpEntry>,
    pub round: usize,
}

impl BpStore {
    /// A store over shapes `0..targets.len()`.
    pub fn new(targets: Vec<OccupancyGrid>, cfg: ObjectiveConfig, layout: StoreLayout) -> BpStore {
        BpStore {
            targets,
            cfg,
            layout,
            entries: BTreeMap::new(),
            round: 0,
        }
    }

    pub fn target(&self, id: ShapeId) -> &OccupancyGrid {
        &self.targets[id]
    }

    pub fn targets(&self) -> &[OccupancyGrid] {
        &self.targets
    }

    pub fn objective_config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    pub fn layout(&self) -> StoreLayout {
        self.layout
    }

    pub fn shape_count(&self) -> usize {
        self.targets.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ShapeId, source: Source) -> Option<&BpEntry> {
        self.entries.get(&(id, self.slot(source)))
    }

    pub fn entries(&self) -> impl Iterator<Item = &BpEntry> {
        self.entries.values()
    }

    pub fn entries_for(&self, id: ShapeId) -> impl Iterator<Item = &BpEntry> {
        self.entries.range((id, Source::NS)..=(id, Source::CG)).map(|(_, e)| e)
    }

    fn slot(&self, source: Source) -> Source {
        match self.layout {
            StoreLayout::PerSource => source,
            StoreLayout::Single => Source::NS,
        }
    }

    pub fn score(&self, id: ShapeId, program: &Expr) -> Score {
        objective(&self.targets[id], program, &self.cfg)
    }

    /// Writes `program` if its slot is empty or it strictly beats the entry.
    pub fn update(&mut self, id: ShapeId, source: Source, program: Expr) -> bool {
        let score = self.score(id, &program);
        self.update_scored(id, source, program, score)
    }

    /// [`BpStore::update`] with a score already computed by the caller.
    pub fn update_scored(&mut self, id: ShapeId, source: Source, program: Expr, score: Score) -> bool {
        let key = (id, self.slot(source));
        if let Some(old) = self.entries.get(&key) {
            if score.objective <= old.score.objective {
                return false;
            }
        }
        self.entries.insert(
            key,
            BpEntry {
                shape_id: id,
                source: key.1,
                program,
                score,
                round_written: self.round,
            },
        );
        true
    }

    /// Removes rewrite entries of `id` scoring strictly below the search
    /// program. NS entries are never purged.
    pub fn purge_stale(&mut self, id: ShapeId, search_program: &Expr) -> usize {
        let bar = self.score(id, search_program).objective;
        self.purge_below(id, bar)
    }

    pub fn purge_below(&mut self, id: ShapeId, bar: f64) -> usize {
        let stale: Vec<_> = self
            .entries_for(id)
            .filter(|e| e.source.is_rewrite() && e.score.objective < bar)
            .map(|e| (e.shape_id, e.source))
            .collect();
        for k in &stale {
            self.entries.remove(k);
        }
        stale.len()
    }

    /// The highest-objective entry of a shape; earlier sources win ties.
    pub fn best(&self, id: ShapeId) -> Option<&BpEntry> {
        self.entries_for(id)
            .fold(None, |b: Option<&BpEntry>, e| match b {
                Some(b) if b.score.objective >= e.score.objective => Some(b),
                _ => Some(e),
            })
    }

    /// Shapes holding at least one entry, ascending.
    pub fn shapes(&self) -> Vec<ShapeId> {
        let mut v: Vec<ShapeId> = self.entries.keys().map(|k| k.0).collect();
        v.dedup();
        v
    }

    /// For each fraction, `ceil(f * n)` shapes drawn without replacement (n =
    /// shapes with entries), each represented by its best entry.
    pub fn sample_for_rewrite<R: Rng + ?Sized>(&self, fractions: &[(Source, f64)], rng: &mut R) -> Vec<(Source, Vec<BpEntry>)> {
        let shapes = self.shapes();
        let n = shapes.len();
        fractions
            .iter()
            .map(|&(src, f)| {
                assert!((0.0..=1.0).contains(&f), "fraction {f} outside [0, 1]");
                let m = budget(f, n);
                let mut picks = sample(rng, n, m).into_vec();
                picks.sort_unstable();
                let entries = picks
                    .into_iter()
                    .map(|i| self.best(shapes[i]).expect("shape has entries").clone())
                    .collect();
                (src, entries)
            })
            .collect()
    }

    /// All (shape, program) pairs, or the NS ones only.
    pub fn training_set(&self, ns_only: bool) -> Vec<(ShapeId, Expr)> {
        self.entries
            .values()
            .filter(|e| !ns_only || e.source == Source::NS)
            .map(|e| (e.shape_id, e.program.clone()))
            .collect()
    }

    /// One tab-separated line per entry: shape id, source, objective, program.
    pub fn write_snapshot(&self, mut w: impl Write) -> io::Result<()> {
        for e in self.entries.values() {
            writeln!(w, "{}\t{}\t{:.9}\t{}", e.shape_id, e.source, e.score.objective, e.program)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> String {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Loads entries written by [`BpStore::write_snapshot`]. Scores are
    /// recomputed against this store's targets.
    pub fn load_snapshot(&mut self, r: impl BufRead, dim: Dim) -> Result<usize, StoreError> {
        let mut n = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| StoreError::Format {
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.splitn(4, '\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let id: ShapeId = f[0].parse().map_err(|_| bad("bad shape id"))?;
            if id >= self.targets.len() {
                return Err(bad("shape id out of range"));
            }
            let src = Source::from_name(f[1]).ok_or_else(|| bad("bad source"))?;
            let program = parse(f[3], dim).map_err(|e| bad(&e.to_string()))?;
            let score = self.score(id, &program);
            self.entries.insert(
                (id, self.slot(src)),
                BpEntry {
                    shape_id: id,
                    source: self.slot(src),
                    program,
                    score,
                    round_written: self.round,
                },
            );
            n += 1;
        }
        Ok(n)
    }
}

/// `ceil(f * n)`, robust to float noise such as `0.15 * 20 = 3.0000000000000004`.
pub fn budget(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let r = x.round();
    let m = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (m as usize).min(n)
}
