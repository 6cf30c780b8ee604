//! The bootstrapped search / rewrite / purge / train loop.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ast::{Dim, Expr};
use crate::graft::{shorten_rewrite, CacheConfig, ShortenItem, SubexprCache};
use crate::grid::{OccupancyGrid, Shape};
use crate::metrics::{iou, objective, ObjectiveConfig, Score};
use crate::rewriters::{Rewriter, RewriterSuite};
use crate::sampler::{sample_nondegenerate, sample_program, SamplerConfig};
use crate::store::{budget, BpStore, ShapeId, Source, StoreLayout};

/// Stand-in for the inference network: proposes programs for a shape and
/// can be trained on (shape, program) pairs.
pub trait ProposalSource: Send + Sync {
    /// At least one valid program. Must be a pure function of the source's
    /// state and `rng`.
    fn propose(&self, x: &OccupancyGrid, beam: usize, rng: &mut ChaCha8Rng) -> Vec<Expr>;
    fn train(&mut self, pairs: &[(OccupancyGrid, Expr)]);
    fn name(&self) -> &'static str;
}

/// Draws programs from the grammar; training does nothing.
#[derive(Clone, Debug)]
pub struct RandomSampler {
    pub cfg: SamplerConfig,
}

impl RandomSampler {
    pub fn new(dim: Dim, depth_max: usize) -> RandomSampler {
        RandomSampler {
            cfg: SamplerConfig::new(dim, depth_max),
        }
    }
}

impl ProposalSource for RandomSampler {
    fn propose(&self, _x: &OccupancyGrid, beam: usize, rng: &mut ChaCha8Rng) -> Vec<Expr> {
        (0..beam.max(1)).map(|_| sample_program(&self.cfg, rng)).collect()
    }

    fn train(&mut self, _pairs: &[(OccupancyGrid, Expr)]) {}

    fn name(&self) -> &'static str {
        "random"
    }
}

/// Nearest-neighbor memory over (shape, program) pairs. Proposes the
/// programs of the closest stored shapes by IoU, each with one jittered copy.
#[derive(Clone, Debug)]
pub struct MemorizingRetriever {
    pretrain: Vec<(OccupancyGrid, Expr)>,
    memory: Vec<(OccupancyGrid, Expr)>,
    /// Half-width of the uniform noise added to raw parameters.
    pub jitter: f64,
    fallback: RandomSampler,
}

impl MemorizingRetriever {
    /// Pretrains on `corpus` random non-degenerate programs. The corpus is
    /// drawn from its own stream of `seed`, so it does not replay a dataset
    /// generated with the same seed.
    pub fn pretrained(dim: Dim, corpus: usize, depth_max: usize, seed: u64) -> MemorizingRetriever {
        let mut rng = rng_for(seed, &[TAG_PRETRAIN]);
        let cfg = SamplerConfig::new(dim, depth_max);
        let shape = Shape::default_for(dim);
        let pretrain: Vec<_> = (0..corpus)
            .map(|_| {
                let (z, g) = sample_nondegenerate(&cfg, &shape, &mut rng);
                (g, z)
            })
            .collect();
        MemorizingRetriever {
            memory: pretrain.clone(),
            pretrain,
            jitter: 0.05,
            fallback: RandomSampler { cfg },
        }
    }

    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    pub fn remembers(&self, z: &Expr) -> bool {
        self.memory.iter().any(|(_, p)| p == z)
    }

    fn jittered(&self, z: &Expr, rng: &mut ChaCha8Rng) -> Expr {
        let phi: Vec<f64> = z
            .raw_params()
            .into_iter()
            .map(|p| (p + rng.gen_range(-self.jitter..=self.jitter)).clamp(-0.99, 0.99))
            .collect();
        z.with_raw_params(&phi).expect("same layout")
    }
}

impl ProposalSource for MemorizingRetriever {
    fn propose(&self, x: &OccupancyGrid, beam: usize, rng: &mut ChaCha8Rng) -> Vec<Expr> {
        let beam = beam.max(1);
        let mut ranked: Vec<(f64, usize, usize)> = self
            .memory
            .iter()
            .enumerate()
            .filter(|(_, (g, _))| g.shape() == x.shape())
            .map(|(i, (g, z))| (iou(x, g).expect("same shape"), z.program_length(), i))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = Vec::with_capacity(beam);
        for &(_, _, i) in ranked.iter().take(beam.div_ceil(2)) {
            let z = &self.memory[i].1;
            out.push(z.clone());
            if out.len() < beam {
                out.push(self.jittered(z, rng));
            }
        }
        while out.len() < beam {
            out.push(sample_program(&self.fallback.cfg, rng));
        }
        out
    }

    fn train(&mut self, pairs: &[(OccupancyGrid, Expr)]) {
        self.memory = self.pretrain.clone();
        self.memory.extend(pairs.iter().cloned());
    }

    fn name(&self) -> &'static str {
        "memorizing"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Search and train only.
    Plad,
    /// Every rewriter on every shape, overwriting a single entry.
    PlusR,
    /// Sparse rewrites into source-isolated slots, with purging.
    Siri,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Plad => "plad",
            Mode::PlusR => "p+r",
            Mode::Siri => "siri",
        }
    }

    pub fn from_name(s: &str) -> Option<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "plad" => Some(Mode::Plad),
            "p+r" | "pr" | "p_plus_r" | "plusr" => Some(Mode::PlusR),
            "siri" => Some(Mode::Siri),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub mode: Mode,
    pub beam: usize,
    pub frac_po: f64,
    pub frac_cp: f64,
    pub frac_cg: f64,
    pub rounds: usize,
    pub seed: u64,
    pub suite: RewriterSuite,
    pub cache_threshold: usize,
    pub cache_capacity: usize,
}

impl LoopConfig {
    pub fn new(dim: Dim, mode: Mode) -> LoopConfig {
        let cache = CacheConfig::for_dim(dim);
        LoopConfig {
            mode,
            beam: 10,
            frac_po: 0.5,
            frac_cp: 0.5,
            frac_cg: 0.15,
            rounds: 5,
            seed: 0,
            suite: RewriterSuite::new(ObjectiveConfig::for_dim(dim)),
            cache_threshold: cache.threshold,
            cache_capacity: cache.capacity,
        }
    }

    pub fn fractions(&self) -> [(Source, f64); 3] {
        [
            (Source::PO, self.frac_po),
            (Source::CP, self.frac_cp),
            (Source::CG, self.frac_cg),
        ]
    }
}

/// Stream tags for derived seeds.
const TAG_SEARCH: u64 = 1;
const TAG_SAMPLE: u64 = 2;
const TAG_REWRITE: u64 = 3;
const TAG_VAL: u64 = 4;
const TAG_CACHE: u64 = 5;
const TAG_PRETRAIN: u64 = 6;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one independent stream, so results do not depend on the order in
/// which parallel work runs.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |h, &p| splitmix(h ^ splitmix(p)))
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// O-argmax of a beam; shorter programs, then earlier ones, win ties.
pub fn select_best(x: &OccupancyGrid, cands: Vec<Expr>, obj: &ObjectiveConfig) -> (Expr, Score) {
    let mut best: Option<(Expr, Score)> = None;
    for z in cands {
        let s = objective(x, &z, obj);
        let better = best.as_ref().is_none_or(|(_, b)| {
            s.objective > b.objective || (s.objective == b.objective && s.length < b.length)
        });
        if better {
            best = Some((z, s));
        }
    }
    best.expect("proposal sources return at least one program")
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteStats {
    pub attempts: BTreeMap<Rewriter, usize>,
    pub accepted: BTreeMap<Rewriter, usize>,
    /// Programs shortened by duplicate replacement; not part of the budget.
    pub shortened: usize,
}

impl RewriteStats {
    pub fn attempts_of(&self, rw: Rewriter) -> usize {
        self.attempts.get(&rw).copied().unwrap_or(0)
    }

    pub fn accepted_of(&self, rw: Rewriter) -> usize {
        self.accepted.get(&rw).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub val_objective: f64,
    pub val_recon: f64,
    pub train_objective: f64,
    pub train_pairs: usize,
    pub stats: RewriteStats,
    pub purged: usize,
    pub cache_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub mode: String,
    pub rounds: Vec<RoundRecord>,
}

impl History {
    pub const HEADER: &'static str = "round,mode,val_objective,val_recon,train_objective,train_pairs,\
po_attempts,po_accepted,cp_attempts,cp_accepted,cg_attempts,cg_accepted,shortened,purged,cache_size";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rounds {
            let st = &r.stats;
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{},{},{}",
                r.round,
                self.mode,
                r.val_objective,
                r.val_recon,
                r.train_objective,
                r.train_pairs,
                st.attempts_of(Rewriter::PO),
                st.accepted_of(Rewriter::PO),
                st.attempts_of(Rewriter::CP),
                st.accepted_of(Rewriter::CP),
                st.attempts_of(Rewriter::CG),
                st.accepted_of(Rewriter::CG),
                st.shortened,
                r.purged,
                r.cache_size
            );
        }
        s
    }

    pub fn final_val_objective(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.val_objective)
    }
}

/// Loop state. Each phase is public so callers can inspect the store between
/// them; [`SiriLoop::run`] chains them.
pub struct SiriLoop<'a> {
    pub cfg: LoopConfig,
    pub store: BpStore,
    pub cache: SubexprCache,
    pub src: &'a mut dyn ProposalSource,
    pub val: Vec<OccupancyGrid>,
    inserted: HashSet<(usize, u64)>,
}

impl<'a> SiriLoop<'a> {
    pub fn new(cfg: LoopConfig, train: Vec<OccupancyGrid>, val: Vec<OccupancyGrid>, src: &'a mut dyn ProposalSource) -> SiriLoop<'a> {
        let dim = train.first().map_or(Dim::Two, |g| g.dim());
        let layout = match cfg.mode {
            Mode::PlusR => StoreLayout::Single,
            _ => StoreLayout::PerSource,
        };
        let store = BpStore::new(train, cfg.suite.obj, layout);
        let cache = SubexprCache::new(CacheConfig {
            dim,
            threshold: cfg.cache_threshold,
            capacity: cfg.cache_capacity,
            seed: derive_seed(cfg.seed, &[TAG_CACHE]),
        });
        SiriLoop {
            cfg,
            store,
            cache,
            src,
            val,
            inserted: HashSet::new(),
        }
    }

    fn obj(&self) -> &ObjectiveConfig {
        &self.cfg.suite.obj
    }

    /// Beam search on every training shape; the argmax goes into the NS slot.
    /// Returns each shape's selected program with its score, whether or not
    /// the store accepted it.
    pub fn search_phase(&mut self, round: usize) -> Vec<(Expr, Score)> {
        self.store.round = round;
        let (src, beam, seed, obj) = (&*self.src, self.cfg.beam, self.cfg.seed, self.cfg.suite.obj);
        let picks: Vec<(Expr, Score)> = self
            .store
            .targets()
            .par_iter()
            .enumerate()
            .map(|(id, x)| {
                let mut rng = rng_for(seed, &[TAG_SEARCH, round as u64, id as u64]);
                select_best(x, src.propose(x, beam, &mut rng), &obj)
            })
            .collect();
        for (id, (z, s)) in picks.iter().enumerate() {
            self.store.update_scored(id, Source::NS, z.clone(), *s);
        }
        picks
    }

    /// Feeds every not-yet-seen stored program into the cache, then shortens
    /// programs whose sub-expressions lost a duplicate contest. Returns the
    /// number of shortened programs written to the CG slot.
    pub fn refresh_cache(&mut self) -> usize {
        let keys: Vec<(ShapeId, Source, Expr)> = self.store.entries().map(|e| (e.shape_id, e.source, e.program.clone())).collect();
        let mut rejections = Vec::new();
        for (id, src, z) in &keys {
            let pid = id * 4 + *src as usize;
            if self.inserted.insert((pid, z.fingerprint())) {
                for r in self.cache.insert_program(pid, z) {
                    rejections.extend(r.rejections);
                }
            }
        }
        if rejections.is_empty() {
            return 0;
        }
        let mut items: BTreeMap<usize, ShortenItem<'_>> = keys
            .iter()
            .map(|(id, src, z)| {
                (
                    id * 4 + *src as usize,
                    ShortenItem {
                        expr: z.clone(),
                        target: self.store.target(*id),
                    },
                )
            })
            .collect();
        let changed = shorten_rewrite(&mut items, &rejections, &self.cfg.suite.obj);
        let updates: Vec<(ShapeId, Expr)> = changed.iter().map(|pid| (pid / 4, items[pid].expr.clone())).collect();
        drop(items);
        updates
            .into_iter()
            .filter(|(id, z)| self.store.update(*id, Source::CG, z.clone()))
            .count()
    }

    /// Refreshes the cache, then applies the rewriters according to the mode.
    pub fn rewrite_phase(&mut self, round: usize) -> RewriteStats {
        if self.cfg.mode == Mode::Plad {
            return RewriteStats::default();
        }
        self.store.round = round;
        let shortened = self.refresh_cache();
        RewriteStats {
            shortened,
            ..self.apply_rewrites(round)
        }
    }

    /// The rewriter half of [`SiriLoop::rewrite_phase`], without the cache
    /// refresh.
    pub fn apply_rewrites(&mut self, round: usize) -> RewriteStats {
        self.store.round = round;
        let mut stats = RewriteStats::default();
        if self.cfg.mode == Mode::Plad {
            return stats;
        }
        let (suite, cache, seed) = (&self.cfg.suite, &self.cache, self.cfg.seed);
        match self.cfg.mode {
            Mode::Siri => {
                let mut rng = rng_for(seed, &[TAG_SAMPLE, round as u64]);
                let samples = self.store.sample_for_rewrite(&self.cfg.fractions(), &mut rng);
                for (src, entries) in samples {
                    let rw = match src {
                        Source::PO => Rewriter::PO,
                        Source::CP => Rewriter::CP,
                        _ => Rewriter::CG,
                    };
                    let store = &self.store;
                    let outs: Vec<(ShapeId, Option<Expr>)> = entries
                        .par_iter()
                        .map(|e| {
                            let s = derive_seed(seed, &[TAG_REWRITE, round as u64, e.shape_id as u64, rw as u64]);
                            (e.shape_id, suite.apply(rw, store.target(e.shape_id), &e.program, cache, s))
                        })
                        .collect();
                    *stats.attempts.entry(rw).or_default() += entries.len();
                    let acc = outs
                        .into_iter()
                        .filter_map(|(id, z)| z.map(|z| (id, z)))
                        .filter(|(id, z)| self.store.update(*id, src, z.clone()))
                        .count();
                    *stats.accepted.entry(rw).or_default() += acc;
                }
            }
            Mode::PlusR => {
                let store = &self.store;
                let outs: Vec<(ShapeId, Vec<(Rewriter, Expr)>)> = store
                    .shapes()
                    .par_iter()
                    .map(|&id| {
                        let x = store.target(id);
                        let mut z = store.best(id).expect("shape has an entry").program.clone();
                        let mut wins = Vec::new();
                        for rw in Rewriter::ALL {
                            let s = derive_seed(seed, &[TAG_REWRITE, round as u64, id as u64, rw as u64]);
                            if let Some(next) = suite.apply(rw, x, &z, cache, s) {
                                z = next.clone();
                                wins.push((rw, next));
                            }
                        }
                        (id, wins)
                    })
                    .collect();
                for rw in Rewriter::ALL {
                    *stats.attempts.entry(rw).or_default() += outs.len();
                }
                for (id, wins) in outs {
                    for (rw, z) in wins {
                        if self.store.update(id, rw.source(), z) {
                            *stats.accepted.entry(rw).or_default() += 1;
                        }
                    }
                }
            }
            Mode::Plad => unreachable!(),
        }
        stats
    }

    /// Purges rewrite entries dominated by this round's search programs.
    pub fn purge_all(&mut self, search: &[(Expr, Score)]) -> usize {
        search
            .iter()
            .enumerate()
            .map(|(id, (_, s))| self.store.purge_below(id, s.objective))
            .sum()
    }

    /// Trains the proposal source on the store's training set.
    pub fn train(&mut self) -> usize {
        let pairs: Vec<(OccupancyGrid, Expr)> = self
            .store
            .training_set(self.cfg.mode == Mode::Plad)
            .into_iter()
            .map(|(id, z)| (self.store.target(id).clone(), z))
            .collect();
        self.src.train(&pairs);
        pairs.len()
    }

    /// Mean objective and recon of a fresh beam search on the validation set.
    pub fn validate(&self, round: usize) -> (f64, f64) {
        if self.val.is_empty() {
            return (0.0, 0.0);
        }
        let (src, beam, seed, obj) = (&*self.src, self.cfg.beam, self.cfg.seed, self.obj());
        let scores: Vec<Score> = self
            .val
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = rng_for(seed, &[TAG_VAL, round as u64, i as u64]);
                select_best(x, src.propose(x, beam, &mut rng), obj).1
            })
            .collect();
        let n = scores.len() as f64;
        (
            scores.iter().map(|s| s.objective).sum::<f64>() / n,
            scores.iter().map(|s| s.recon).sum::<f64>() / n,
        )
    }

    /// Mean over training shapes of the best objective across sources.
    pub fn train_objective(&self) -> f64 {
        let shapes = self.store.shapes();
        if shapes.is_empty() {
            return 0.0;
        }
        shapes
            .iter()
            .map(|&id| self.store.best(id).expect("present").score.objective)
            .sum::<f64>()
            / shapes.len() as f64
    }

    pub fn round(&mut self, round: usize) -> RoundRecord {
        let search = self.search_phase(round);
        let stats = self.rewrite_phase(round);
        let purged = self.purge_all(&search);
        let train_pairs = self.train();
        let (val_objective, val_recon) = self.validate(round);
        RoundRecord {
            round,
            val_objective,
            val_recon,
            train_objective: self.train_objective(),
            train_pairs,
            stats,
            purged,
            cache_size: self.cache.len(),
        }
    }

    pub fn run(&mut self) -> History {
        let mut h = History {
            mode: self.cfg.mode.name().to_string(),
            rounds: Vec::new(),
        };
        for r in 1..=self.cfg.rounds {
            let rec = self.round(r);
            h.rounds.push(rec);
        }
        h
    }
}

/// Expected rewrite attempts per round for `n` shapes.
pub fn expected_budget(cfg: &LoopConfig, n: usize) -> [usize; 3] {
    match cfg.mode {
        Mode::Plad => [0; 3],
        Mode::PlusR => [n; 3],
        Mode::Siri => [budget(cfg.frac_po, n), budget(cfg.frac_cp, n), budget(cfg.frac_cg, n)],
    }
}
