//! Acceptance criteria 1-10. A single driver runs them in order and prints one
//! PASS/FAIL line per criterion straight to stdout, past the test harness's
//! output capture.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csg_rewrite::diff::{branch_margin, grad_loss, recon_loss};
use csg_rewrite::exec::{execute_hard, sdf_eval, soft_occupancy, PointSet};
use csg_rewrite::graft::{invert_bool, CacheConfig, InsertOutcome, Side, SubexprCache, Ternary};
use csg_rewrite::metrics::{iou, objective};
use csg_rewrite::po::{optimize_params, PoConfig};
use csg_rewrite::prune::{in_subprogram_space, oracle_cp, rewrite_cp, CpConfig};
use csg_rewrite::rewriters::{Rewriter, RewriterSuite};
use csg_rewrite::sampler::{sample_nondegenerate, sample_program, SamplerConfig};
use csg_rewrite::siri::{expected_budget, select_best, LoopConfig, MemorizingRetriever, Mode, ProposalSource, RandomSampler, SiriLoop};
use csg_rewrite::store::{BpEntry, ShapeId, Source};
use csg_rewrite::ttr::{TtrConfig, TtrState};
use csg_rewrite::{cli, BoolOp, Dim, Expr, ObjectiveConfig, OccupancyGrid, PrimitiveKind, Shape};

/// Outcome of one criterion: pass flag plus a short measurement summary.
type Verdict = (bool, String);

fn say(line: &str) {
    let mut out = std::io::stdout();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn run(n: usize, name: &str, f: fn() -> Verdict) -> bool {
    let t = Instant::now();
    let r = panic::catch_unwind(AssertUnwindSafe(f));
    let secs = t.elapsed().as_secs_f64();
    let (ok, detail) = r.unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    say(&format!(
        "criterion {n:>2} {name}: {} ({detail}; {secs:.1}s)",
        if ok { "PASS" } else { "FAIL" }
    ));
    ok
}

fn jitter(e: &Expr, width: f64, rng: &mut ChaCha8Rng) -> Expr {
    let phi: Vec<f64> = e
        .raw_params()
        .iter()
        .map(|p| (p + rng.gen_range(-width..=width)).clamp(-0.99, 0.99))
        .collect();
    e.with_raw_params(&phi).expect("same layout")
}

fn c1_gradient() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-4;
    let (mut checked, mut worst) = (0, 0.0f64);
    let mut skipped = 0;
    while checked < 100 {
        let dim = if checked % 2 == 0 { Dim::Two } else { Dim::Three };
        let shape = Shape::cubic(dim, if dim == Dim::Two { 64 } else { 16 });
        let cfg = SamplerConfig::new(dim, rng.gen_range(0..=3));
        let target = execute_hard(&sample_program(&cfg, &mut rng), &shape);
        // off the 33-bin lattice, so radii and offsets do not tie exactly
        let e = jitter(&sample_program(&cfg, &mut rng), 0.01, &mut rng);
        if branch_margin(&e, &shape) < 1e-3 {
            skipped += 1;
            continue;
        }
        let k = rng.gen_range(3.0..10.0);
        let phi = e.raw_params();
        let g = grad_loss(&e, &phi, &target, k).unwrap();
        let fd: Vec<f64> = (0..phi.len())
            .map(|i| {
                let (mut up, mut dn) = (phi.clone(), phi.clone());
                up[i] += h;
                dn[i] -= h;
                (recon_loss(&e, &up, &target, k).unwrap() - recon_loss(&e, &dn, &target, k).unwrap()) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
        checked += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    (
        worst <= 1e-3 && secs <= 60.0,
        format!("100 programs, {skipped} near-tie draws skipped, max rel err {worst:.2e}, {secs:.1}s of 60s"),
    )
}

fn c2_po_recovery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shape = Shape::default_for(Dim::Two);
    let cfg = SamplerConfig::new(Dim::Two, 2);
    let po = PoConfig::default();
    let (mut ok, mut slowest) = (0, 0.0f64);
    for _ in 0..50 {
        let (truth, x) = sample_nondegenerate(&cfg, &shape, &mut rng);
        let start = jitter(&truth, 0.1, &mut rng);
        let t = Instant::now();
        let out = optimize_params(&x, &start, &po).program;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        if iou(&x, &execute_hard(&out, &shape)).unwrap() >= 0.98 {
            ok += 1;
        }
    }
    (
        ok >= 40 && slowest <= 2.0,
        format!("{ok}/50 reach IoU >= 0.98 (need 40), slowest case {slowest:.2}s of 2s"),
    )
}

fn c3_soft_hard() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agree = 0;
    for i in 0..1000 {
        let dim = if i % 2 == 0 { Dim::Two } else { Dim::Three };
        let res = rng.gen_range(4..=if dim == Dim::Two { 64 } else { 24 });
        let shape = Shape::cubic(dim, res);
        let z = sample_program(&SamplerConfig::new(dim, rng.gen_range(0..=3)), &mut rng);
        let hard = execute_hard(&z, &shape);
        let soft = soft_occupancy(&sdf_eval(&z, &PointSet::grid_centers(&shape)), rng.gen_range(0.5..50.0));
        let thresholded = OccupancyGrid::from_fn(shape, |c| soft.values[c] > 0.5);
        agree += usize::from(thresholded == hard);
    }
    (agree == 1000, format!("{agree}/1000 grids identical"))
}

/// A subtree that leaves any sibling unchanged under `op`.
fn null_subtree(rng: &mut ChaCha8Rng) -> (BoolOp, Expr) {
    match rng.gen_range(0..3) {
        // centered on a cell corner and smaller than a cell: executes empty
        0 => (
            BoolOp::Union,
            Expr::primitive(PrimitiveKind::Rectangle, vec![0.5, 0.5, -0.99, -0.99, 0.0]),
        ),
        1 => (
            BoolOp::Subtract,
            Expr::primitive(PrimitiveKind::Ellipse, vec![-0.25, 0.25, -0.995, -0.995, 0.3]),
        ),
        // covers every cell center
        _ => (
            BoolOp::Intersect,
            Expr::primitive(PrimitiveKind::Rectangle, vec![0.0, 0.0, 0.99, 0.99, 0.0]),
        ),
    }
}

fn c4_pruning() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = Shape::default_for(Dim::Two);
    let obj = ObjectiveConfig::for_dim(Dim::Two);
    let cp = CpConfig::default();
    let sampler = SamplerConfig::new(Dim::Two, 2);
    let mut a_ok = 0;
    for _ in 0..100 {
        let (z, x0) = sample_nondegenerate(&sampler, &shape, &mut rng);
        // pruning may trade a little recon for length, so the base is taken to
        // a fixpoint against its own execution before anything is injected
        let mut base = rewrite_cp(&x0, &z, &obj, &cp).unwrap_or(z);
        while let Some(b) = rewrite_cp(&execute_hard(&base, &shape), &base, &obj, &cp) {
            base = b;
        }
        let x = execute_hard(&base, &shape);
        let mut injected = base.clone();
        for _ in 0..rng.gen_range(1..=3) {
            let nodes = injected.nodes();
            let (path, node) = &nodes[rng.gen_range(0..nodes.len())];
            let (op, null) = null_subtree(&mut rng);
            let wrapped = Expr::boolean(op, (*node).clone(), null);
            injected = injected.replace(path, wrapped).unwrap();
        }
        assert_eq!(execute_hard(&injected, &shape), x, "injection changed the execution");
        let Some(out) = rewrite_cp(&x, &injected, &obj, &cp) else {
            continue;
        };
        let same = execute_hard(&out, &shape) == x;
        if same && out.program_length() < injected.program_length() && out.program_length() <= base.program_length() {
            a_ok += 1;
        }
    }

    let mut b_ok = 0;
    let mut accepted = 0;
    let small = SamplerConfig::new(Dim::Two, 3);
    let mut drawn = 0;
    while drawn < 200 {
        let z = sample_program(&small, &mut rng);
        if z.nodes().len() > 7 {
            continue;
        }
        drawn += 1;
        // half the targets come from a subtree, so pruning has something to find
        let x = if drawn % 2 == 0 {
            let nodes = z.nodes();
            execute_hard(nodes[rng.gen_range(0..nodes.len())].1, &shape)
        } else {
            sample_nondegenerate(&sampler, &shape, &mut rng).1
        };
        let o = |e: &Expr| objective(&x, e, &obj).objective;
        let oracle = oracle_cp(&x, &z, &obj).unwrap();
        let greedy = rewrite_cp(&x, &z, &obj, &cp);
        accepted += usize::from(greedy.is_some());
        let og = greedy.as_ref().map_or(o(&z), o);
        if o(&z) <= og && og <= o(&oracle) {
            b_ok += 1;
        }
    }
    (
        a_ok == 100 && b_ok == 200,
        format!("(a) {a_ok}/100 cleaned; (b) {b_ok}/200 ordered, greedy accepted on {accepted}"),
    )
}

fn c5_inversion() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = usize::MAX;
    let mut failures = 0;
    for op in BoolOp::ALL {
        for side in [Side::Left, Side::Right] {
            for strong in [false, true] {
                let mut ok = 0;
                for i in 0..500 {
                    let dim = if i % 2 == 0 { Dim::Two } else { Dim::Three };
                    let shape = Shape::cubic(dim, if dim == Dim::Two { 32 } else { 12 });
                    let (a, b) = if i % 3 == 0 {
                        // unstructured grids
                        let p = rng.gen_range(0.1..0.9);
                        let mut bits = || OccupancyGrid::from_fn(shape, |_| rng.gen_bool(p));
                        (bits(), bits())
                    } else {
                        let cfg = SamplerConfig::new(dim, 2);
                        (
                            execute_hard(&sample_program(&cfg, &mut rng), &shape),
                            execute_hard(&sample_program(&cfg, &mut rng), &shape),
                        )
                    };
                    let t = match op {
                        BoolOp::Union => a.union(&b),
                        BoolOp::Intersect => a.intersect(&b),
                        BoolOp::Subtract => a.subtract(&b),
                    };
                    let (child, sibling) = match side {
                        Side::Left => (&a, &b),
                        Side::Right => (&b, &a),
                    };
                    let inv = invert_bool(op, &Ternary::known(t), sibling, side, strong);
                    let wrong = inv
                        .valid
                        .bits()
                        .and(&inv.target.bits().and(child.bits()).or(&inv.target.bits().not().and(&child.bits().not())).not())
                        .count_ones();
                    ok += usize::from(wrong == 0);
                }
                worst = worst.min(ok);
                failures += 500 - ok;
            }
        }
    }
    (
        failures == 0,
        format!("12 cases (3 ops x 2 children x 2 mask modes) x 500 triples, worst case {worst}/500"),
    )
}

fn c6_cache() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cache = SubexprCache::new(CacheConfig {
        seed: 6,
        ..CacheConfig::for_dim(Dim::Two)
    });
    let th = cache.cfg.threshold;
    let (mut inserts, mut events, mut bad_events, mut max_len) = (0, 0, 0, 0);
    let mut pid = 0;
    while inserts < 5000 {
        let z = sample_program(&SamplerConfig::new(Dim::Two, rng.gen_range(0..=3)), &mut rng);
        for r in cache.insert_program(pid, &z) {
            inserts += 1;
            max_len = max_len.max(cache.len());
            if matches!(r.outcome, InsertOutcome::Rejected | InsertOutcome::Replaced(_)) {
                events += 1;
                let shorter_kept = match r.outcome {
                    InsertOutcome::Rejected => r.rejections.iter().all(|j| j.preferred_length <= j.rejected_length),
                    _ => r.rejections.iter().all(|j| j.preferred_length < j.rejected_length),
                };
                bad_events += usize::from(!shorter_kept);
            }
        }
        pid += 1;
    }
    let min = cache.min_pairwise_distance().unwrap_or(usize::MAX);

    // eviction path with a capacity the test can actually reach
    let mut small = SubexprCache::new(CacheConfig {
        capacity: 300,
        seed: 7,
        ..CacheConfig::for_dim(Dim::Two)
    });
    let mut small_max = 0;
    for p in 0..400 {
        let z = sample_program(&SamplerConfig::new(Dim::Two, 2), &mut rng);
        small.insert_program(p, &z);
        small_max = small_max.max(small.len());
    }
    (
        min >= th && bad_events == 0 && max_len <= 35_000 && small_max <= 300,
        format!(
            "{inserts} inserts, {} entries, min pair distance {min} (threshold {th}), {events} duplicate events all shorter-preferred: {}, peak size {max_len}; capacity-300 cache peaked at {small_max}",
            cache.len(),
            bad_events == 0
        ),
    )
}

fn c7_ttr() -> Verdict {
    let dim = Dim::Three;
    let shape = Shape::default_for(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sampler = SamplerConfig::new(dim, 2);
    let obj = ObjectiveConfig::for_dim(dim);
    let targets: Vec<OccupancyGrid> = (0..100).map(|_| sample_nondegenerate(&sampler, &shape, &mut rng).1).collect();
    // grafting draws from an unrelated random corpus
    let mut cache = SubexprCache::new(CacheConfig {
        seed: 7,
        ..CacheConfig::for_dim(dim)
    });
    for p in 0..200 {
        cache.insert_program(p, &sample_program(&sampler, &mut rng));
    }
    let init_src = RandomSampler::new(dim, 2);
    let cfg = TtrConfig {
        seed: 7,
        ..TtrConfig::new(RewriterSuite::new(obj))
    };
    let (mut iou0, mut iou1, mut iou3) = (0.0, 0.0, 0.0);
    let (mut decreases, mut slowest) = (0, 0.0f64);
    for (i, x) in targets.iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let (z0, s0) = select_best(x, init_src.propose(x, 10, &mut r), &obj);
        let t = Instant::now();
        let mut st = TtrState::new(x, &z0, &cfg.suite);
        let mut prev = s0.objective;
        let mut after_one = None;
        for round in 1..=3 {
            for &rw in &cfg.order {
                st.step(x, rw, &cache, &cfg, round);
                let now = st.best().1.objective;
                decreases += usize::from(now < prev);
                prev = now;
            }
            if round == 1 {
                after_one = Some(st.best().0.clone());
            }
        }
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let score = |z: &Expr| iou(x, &execute_hard(z, &shape)).unwrap();
        iou0 += score(&z0);
        iou1 += score(after_one.as_ref().unwrap());
        iou3 += score(st.best().0);
    }
    let n = targets.len() as f64;
    let (iou0, iou1, iou3) = (iou0 / n, iou1 / n, iou3 / n);
    (
        decreases == 0 && iou3 > iou0 && iou3 >= iou1 && slowest <= 30.0,
        format!("mean IoU {iou0:.4} -> 1-TTR {iou1:.4} -> 3-TTR {iou3:.4}, {decreases} objective decreases, slowest shape {slowest:.1}s of 30s"),
    )
}

fn snapshot(lp: &SiriLoop<'_>) -> BTreeMap<(ShapeId, Source), BpEntry> {
    lp.store.entries().map(|e| ((e.shape_id, e.source), e.clone())).collect()
}

fn skeleton(z: &Expr) -> Expr {
    z.with_raw_params(&vec![0.0; z.raw_params().len()]).unwrap()
}

fn small_2d_set(n: usize, seed: u64) -> Vec<OccupancyGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SamplerConfig::new(Dim::Two, 2);
    let shape = Shape::default_for(Dim::Two);
    (0..n).map(|_| sample_nondegenerate(&cfg, &shape, &mut rng).1).collect()
}

fn c8_loop_invariants() -> Verdict {
    let train = small_2d_set(40, 80);
    let mut problems: Vec<String> = Vec::new();
    for mode in [Mode::Plad, Mode::PlusR, Mode::Siri] {
        let mut cfg = LoopConfig::new(Dim::Two, mode);
        cfg.seed = 8;
        let n = train.len();
        let mut src = MemorizingRetriever::pretrained(Dim::Two, 100, 2, 8);
        let mut lp = SiriLoop::new(cfg.clone(), train.clone(), Vec::new(), &mut src);
        let mut best_prev = vec![f64::NEG_INFINITY; n];
        let mut check_best = |lp: &SiriLoop<'_>, stage: &str, round: usize, problems: &mut Vec<String>| {
            for (id, prev) in best_prev.iter_mut().enumerate() {
                let now = lp.store.best(id).map_or(f64::NEG_INFINITY, |e| e.score.objective);
                if now < *prev {
                    problems.push(format!("{}: shape {id} best O fell after {stage} in round {round}", mode.name()));
                }
                *prev = now;
            }
        };
        for round in 1..=5 {
            let before = snapshot(&lp);
            let search = lp.search_phase(round);
            let after_search = snapshot(&lp);
            check_best(&lp, "search", round, &mut problems);
            let shortened = if mode == Mode::Plad { 0 } else { lp.refresh_cache() };
            let after_refresh = snapshot(&lp);
            let stats = lp.apply_rewrites(round);
            let after_rw = snapshot(&lp);
            check_best(&lp, "rewrite", round, &mut problems);

            let want = expected_budget(&cfg, n);
            let got = [Rewriter::PO, Rewriter::CP, Rewriter::CG].map(|rw| stats.attempts_of(rw));
            if want != got {
                problems.push(format!("{}: round {round} budget {got:?}, expected {want:?}", mode.name()));
            }

            if mode == Mode::PlusR && after_rw.keys().any(|k| k.1 != Source::NS) {
                problems.push("p+r: entry outside the single slot".into());
            }
            if mode == Mode::Siri {
                for (k, e) in &after_search {
                    if k.1 != Source::NS && before.get(k) != Some(e) {
                        problems.push(format!("siri: search touched {k:?}"));
                    }
                }
                let refreshed = after_refresh.iter().filter(|(k, e)| after_search.get(k) != Some(e)).count();
                if after_refresh.iter().any(|(k, e)| k.1 != Source::CG && after_search.get(k) != Some(e)) || refreshed > shortened {
                    problems.push(format!("siri: cache refresh wrote outside the CG slot in round {round}"));
                }
                for (k, e) in &after_rw {
                    if after_refresh.get(k) == Some(e) {
                        continue;
                    }
                    let olds: Vec<&Expr> = after_refresh.iter().filter(|(kk, _)| kk.0 == k.0).map(|(_, v)| &v.program).collect();
                    let isolated = match k.1 {
                        Source::NS => false,
                        Source::PO => olds.iter().any(|o| skeleton(o) == skeleton(&e.program)),
                        Source::CP => olds.iter().any(|o| in_subprogram_space(o, &e.program)),
                        Source::CG => true,
                    };
                    if !isolated {
                        problems.push(format!("siri: slot {k:?} holds a program its rewriter cannot produce"));
                    }
                }
                for src in Source::REWRITES {
                    let changed = after_rw.iter().filter(|(k, e)| k.1 == src && after_refresh.get(k) != Some(e)).count();
                    let rw = [Rewriter::PO, Rewriter::CP, Rewriter::CG][src as usize - 1];
                    let allowed = stats.accepted_of(rw);
                    if changed > allowed {
                        problems.push(format!("siri: {changed} {src:?} writes, {allowed} accounted for"));
                    }
                }
            }

            // reference purge: rewrite entries strictly below this round's search O
            let expected: BTreeSet<(ShapeId, Source)> = after_rw
                .iter()
                .filter(|(k, e)| k.1.is_rewrite() && e.score.objective < search[k.0].1.objective)
                .map(|(k, _)| *k)
                .collect();
            let purged = lp.purge_all(&search);
            let after_purge: BTreeSet<(ShapeId, Source)> = snapshot(&lp).into_keys().collect();
            let reference: BTreeSet<_> = after_rw.keys().copied().filter(|k| !expected.contains(k)).collect();
            if purged != expected.len() || after_purge != reference {
                problems.push(format!("{}: round {round} purge mismatch", mode.name()));
            }
            check_best(&lp, "purge", round, &mut problems);
            lp.train();
        }
    }
    let detail = if problems.is_empty() {
        "3 modes x 5 rounds on 40 shapes, monotone best O, isolation, budgets and purges all hold".to_string()
    } else {
        problems[..problems.len().min(5)].join("; ")
    };
    (problems.is_empty(), detail)
}

fn c9_mode_comparison() -> Verdict {
    let train = small_2d_set(200, 90);
    let val = small_2d_set(50, 91);
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let mut finals = [0.0; 2];
        for (slot, mode) in [Mode::Siri, Mode::Plad].into_iter().enumerate() {
            let mut cfg = LoopConfig::new(Dim::Two, mode);
            cfg.seed = seed;
            cfg.rounds = 3;
            let mut src = MemorizingRetriever::pretrained(Dim::Two, 200, 2, seed);
            let mut lp = SiriLoop::new(cfg, train.clone(), val.clone(), &mut src);
            finals[slot] = lp.run().final_val_objective().unwrap();
        }
        wins += usize::from(finals[0] >= finals[1]);
        rows.push(format!("seed {seed}: siri {:.3} plad {:.3}", finals[0], finals[1]));
    }
    (wins >= 4, format!("siri >= plad in {wins}/5 seeds (need 4); {}", rows.join(", ")))
}

fn pipeline(dir: &std::path::Path, threads: &str) -> Vec<Vec<u8>> {
    let d = |p: &str| dir.join(p).display().to_string();
    let call = |args: &[&str]| {
        let mut argv = vec!["csgrw".to_string(), "--seed".into(), "10".into(), "--threads".into(), threads.into()];
        argv.extend(args.iter().map(|s| s.to_string()));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli::run(&argv, &mut out, &mut err);
        assert_eq!(code, 0, "{argv:?}: {}", String::from_utf8_lossy(&err));
    };
    call(&["gen-data", "--dim", "2", "--count", "24", "--depth-max", "2", "--out", &d("train")]);
    call(&["gen-data", "--dim", "2", "--count", "8", "--depth-max", "2", "--out", &d("val")]);
    call(&[
        "siri", "--train", &d("train"), "--val", &d("val"), "--rounds", "2", "--po-steps", "60", "--pretrain", "50", "--out", &d("run"),
    ]);
    call(&[
        "ttr", "--dataset", &d("train"), "--programs", &d("run/programs.tsv"), "--cache", &d("run/cache.txt"), "--po-steps", "60",
        "--out", &d("ttr.tsv"), "--trace", &d("trace.jsonl"),
    ]);
    ["run/history.csv", "run/programs.tsv", "run/store.txt", "run/cache.txt", "ttr.tsv", "trace.jsonl"]
        .iter()
        .map(|p| std::fs::read(dir.join(p)).unwrap())
        .collect()
}

fn c10_determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path(), "1");
    let rb = pipeline(b.path(), "2");
    let same = ra == rb;
    (
        same && ra.iter().all(|f| !f.is_empty()),
        format!("gen-data -> siri -> ttr twice (1 and 2 threads): history, programs, store, cache, ttr output identical: {same}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("gradient oracle", c1_gradient),
        ("PO recovery", c2_po_recovery),
        ("soft/hard consistency", c3_soft_hard),
        ("CP correctness", c4_pruning),
        ("inversion soundness", c5_inversion),
        ("cache contract", c6_cache),
        ("TTR non-deleterious and effective", c7_ttr),
        ("loop invariants", c8_loop_invariants),
        ("mode comparison (reported, not gating)", c9_mode_comparison),
        ("determinism", c10_determinism),
    ];
    // ACCEPTANCE_ONLY=4,8 runs a subset
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        if !run(i + 1, name, f) && i + 1 != 9 {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
