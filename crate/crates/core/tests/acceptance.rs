//! End-to-end acceptance checks. Each test prints one `PASS` / `FAIL` line.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use abd_nmt::checkpoint;
use abd_nmt::cli::run_grad_check;
use abd_nmt::data::{build_vocab, gen_synthetic, Task, Vocabulary, BOS_ID, EOS_ID};
use abd_nmt::decoding::{beam_search_forward, translate, translate_all, BeamConfig, DecodeConfig};
use abd_nmt::eval::{bleu, sequence_accuracy, BleuReport, MAX_ORDER};
use abd_nmt::layers::{AttentionParams, Initializer};
use abd_nmt::model::{
    argmax_allowed, count_params, init_model, Architecture, Dropout, LossOptions, Model,
    ModelConfig, FORWARD_BANNED,
};
use abd_nmt::numcore::{Component, GradCheckConfig, Graph, ParamStore, Tensor2};
use abd_nmt::training::{train, DevSet, MetricRow, TrainConfig, Trainer};

fn report(n: usize, title: &str, ok: bool, detail: String) {
    println!(
        "criterion {n:>2} {} {title}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} ({title}) failed: {detail}");
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[test]
fn c01_gradient_check() {
    let t0 = Instant::now();
    let cfg = GradCheckConfig::default();
    let mut worst = 0.0f64;
    let mut ok = true;
    for detach in [false, true] {
        let r = run_grad_check(0, detach, &cfg, false).unwrap();
        worst = worst.max(r.max_rel_err());
        ok &= r.passed();
    }
    let elapsed = t0.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    report(
        1,
        "joint-loss gradients vs finite differences",
        ok,
        format!("max rel err {worst:.2e} (tol 1e-4) in {:.1?}", elapsed),
    );
}

fn tiny_f64(lambda: f64, seed: u64) -> Model<f64> {
    let mut c = ModelConfig::small(11, 13, 8, 12);
    c.lambda = lambda;
    c.dropout = 0.0;
    c.init_scale = 0.3;
    init_model(&c, seed).unwrap()
}

#[test]
fn c02_objective_endpoints() {
    let src = vec![vec![4, 9, 5, 10, 6], vec![7, 8]];
    let tgt = vec![vec![7, 12, 4, 11, 8, 5], vec![9, 4, 6]];
    let mut worst = 0.0f64;
    let mut leaked = 0usize;
    for seed in 0..5 {
        for lambda in [1.0, 0.0] {
            let m = tiny_f64(lambda, seed);
            let mut g = Graph::new(&m.store);
            let l = m
                .joint_loss(
                    &mut g,
                    &src,
                    &tgt,
                    &mut Dropout::off(),
                    &LossOptions::default(),
                )
                .unwrap();
            let want = if lambda == 1.0 {
                l.mean_forward_nll()
            } else {
                l.mean_backward_nll()
            };
            worst = worst.max((l.value - want).abs());
            if lambda == 0.0 {
                let grads = g.backward(l.total).unwrap();
                let mut store: ParamStore<f64> = m.store.clone();
                store.zero_grads();
                grads.accumulate_into(&mut store).unwrap();
                leaked += store
                    .iter()
                    .filter(|p| p.component == Component::Forward)
                    .filter(|p| p.grad.data().iter().any(|&x| x != 0.0))
                    .count();
            }
        }
    }
    report(
        2,
        "objective endpoints",
        worst <= 1e-12 && leaked == 0,
        format!(
            "max |J - single nll| = {worst:.1e}; forward params with nonzero grad at λ=0: {leaked}"
        ),
    );
}

#[test]
fn c03_attention_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    let mut max_sum_err = 0.0f64;
    for case in 0..1000 {
        let (qd, kd, ad) = (
            rng.random_range(1..7),
            rng.random_range(1..7),
            rng.random_range(1..7),
        );
        let (batch, n) = (rng.random_range(1..4), rng.random_range(1..10));
        let mut store = ParamStore::new();
        let mut init = Initializer::new(case, rng.random_range(0.1..3.0));
        let att =
            AttentionParams::register(&mut store, "a", Component::Forward, qd, kd, ad, &mut init)
                .unwrap();
        let query: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..qd).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let keys: Vec<Vec<f64>> = (0..batch * n)
            .map(|_| (0..kd).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let mut mask: Vec<bool> = (0..batch * n).map(|_| rng.random_bool(0.7)).collect();
        for b in 0..batch {
            let keep = b * n + rng.random_range(0..n);
            mask[keep] = true;
        }
        let mut g = Graph::new(&store);
        let q = g.constant(Tensor2::from_rows(&query).unwrap());
        let k = g.constant(Tensor2::from_rows(&keys).unwrap());
        let kp = att.project_keys(&mut g, k).unwrap();
        let ctx = att.attend(&mut g, q, kp, k, &mask, n).unwrap();
        let w = g.attention_weights(ctx).unwrap().clone();
        let c = g.value(ctx).clone();
        let mut ok = true;
        for b in 0..batch {
            let row = w.row(b);
            let sum: f64 = row.iter().sum();
            max_sum_err = max_sum_err.max((sum - 1.0).abs());
            ok &= (sum - 1.0).abs() <= 1e-6;
            for i in 0..n {
                let m = mask[b * n + i];
                ok &= if m { row[i] >= 0.0 } else { row[i] == 0.0 };
            }
            for d in 0..kd {
                let live = (0..n)
                    .filter(|&i| mask[b * n + i])
                    .map(|i| keys[b * n + i][d]);
                let (lo, hi) = live.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                    (l.min(x), h.max(x))
                });
                let v = c.get(b, d);
                ok &= v >= lo - 1e-12 && v <= hi + 1e-12;
            }
        }
        failures += usize::from(!ok);
    }
    report(
        3,
        "attention contracts",
        failures == 0,
        format!("1000 invocations, {failures} violations, max |Σw - 1| = {max_sum_err:.1e}"),
    );
}

fn forward_setup<'p>(
    m: &'p Model<f64>,
    g: &mut Graph<'p, f64>,
    src: &[usize],
    max_len: usize,
) -> (
    abd_nmt::model::SourceContext,
    Option<abd_nmt::model::TraceContext>,
) {
    let ann = m.encode(g, &[src.to_vec()]).unwrap();
    let sc = m.source_context(g, ann).unwrap();
    let trace = m.backward_greedy_trace(g, &sc, &[max_len], None).unwrap();
    let ctx = m.trace_context(g, &trace).unwrap();
    (sc, ctx)
}

fn greedy(m: &Model<f64>, src: &[usize], max_len: usize) -> Vec<usize> {
    let mut g = Graph::new(&m.store);
    let (sc, ctx) = forward_setup(m, &mut g, src, max_len);
    let (mut s, mut prev, mut out) = (sc.ann.first_backward, BOS_ID, Vec::new());
    while out.len() < max_len {
        let (next, lp) = m
            .forward_step(&mut g, &sc, ctx.as_ref(), s, &[prev], &mut Dropout::off())
            .unwrap();
        let t = argmax_allowed(g.value(lp).row(0), &FORWARD_BANNED);
        out.push(t);
        if t == EOS_ID {
            break;
        }
        (s, prev) = (next, t);
    }
    out
}

fn sequence_logprob(m: &Model<f64>, src: &[usize], tokens: &[usize], max_len: usize) -> f64 {
    let mut g = Graph::new(&m.store);
    let (sc, ctx) = forward_setup(m, &mut g, src, max_len);
    let (mut s, mut prev, mut total) = (sc.ann.first_backward, BOS_ID, 0.0);
    for &t in tokens {
        let (next, lp) = m
            .forward_step(&mut g, &sc, ctx.as_ref(), s, &[prev], &mut Dropout::off())
            .unwrap();
        total += g.value(lp).get(0, t);
        (s, prev) = (next, t);
    }
    total
}

fn beam(m: &Model<f64>, src: &[usize], width: usize, max_len: usize) -> (Vec<usize>, f64) {
    let mut g = Graph::new(&m.store);
    let (sc, ctx) = forward_setup(m, &mut g, src, max_len);
    let cfg = BeamConfig {
        beam: width,
        max_len,
        length_normalize: false,
    };
    let hyps = beam_search_forward(m, &mut g, &sc, ctx.as_ref(), &cfg).unwrap();
    (hyps[0].tokens.clone(), hyps[0].score)
}

#[test]
fn c04_decoding_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut greedy_mismatch = 0;
    for case in 0..100 {
        let (sv, tv) = (rng.random_range(5..12), rng.random_range(5..12));
        let mut c = ModelConfig::small(sv, tv, rng.random_range(2..6), rng.random_range(2..7));
        c.init_scale = rng.random_range(0.2..1.5);
        let m: Model<f64> = init_model(&c, case).unwrap();
        let src: Vec<usize> = (0..rng.random_range(1..6))
            .map(|_| rng.random_range(4..sv))
            .collect();
        let max_len = c.max_decode_len(src.len());
        if beam(&m, &src, 1, max_len).0 != greedy(&m, &src, max_len) {
            greedy_mismatch += 1;
        }
    }
    let mut exhaustive_mismatch = 0;
    let mut c = ModelConfig::small(6, 5, 3, 4);
    c.init_scale = 1.0;
    let emit: Vec<usize> = (0..5).filter(|t| !FORWARD_BANNED.contains(t)).collect();
    for draw in 0..20 {
        let m: Model<f64> = init_model(&c, 100 + draw).unwrap();
        let src = [4, 5];
        let max_len = 3;
        let mut best = f64::NEG_INFINITY;
        let mut frontier: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for p in &frontier {
                for &t in &emit {
                    let mut q = p.clone();
                    q.push(t);
                    if t == EOS_ID || q.len() == max_len {
                        best = best.max(sequence_logprob(&m, &src, &q, max_len));
                    }
                    if t != EOS_ID {
                        next.push(q);
                    }
                }
            }
            frontier = next;
        }
        let (_, score) = beam(&m, &src, 25, max_len);
        if (score - best).abs() > 1e-9 {
            exhaustive_mismatch += 1;
        }
    }
    report(
        4,
        "decoding oracles",
        greedy_mismatch == 0 && exhaustive_mismatch == 0,
        format!("beam-1 vs greedy: {greedy_mismatch}/100 mismatches; beam-25 vs exhaustive: {exhaustive_mismatch}/20"),
    );
}

struct ToyData {
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
    held_src: Vec<Vec<usize>>,
    held_tgt: Vec<Vec<usize>>,
    tgt_vocab: Vocabulary,
    src_len: usize,
    tgt_len: usize,
}

fn prepare(
    task: Task,
    n: usize,
    held: usize,
    seed: u64,
    lens: (usize, usize),
    vocab: usize,
) -> ToyData {
    let train_c = gen_synthetic(task, n, seed, lens, vocab).unwrap();
    let held_c = gen_synthetic(task, held, seed + 1000, lens, vocab).unwrap();
    let sv = build_vocab(&train_c.sources(), 1000).unwrap();
    let tv = build_vocab(&train_c.targets(), 1000).unwrap();
    ToyData {
        pairs: train_c
            .pairs
            .iter()
            .map(|(s, t)| (sv.encode(s), tv.encode(t)))
            .collect(),
        held_src: held_c.pairs.iter().map(|(s, _)| sv.encode(s)).collect(),
        held_tgt: held_c.pairs.iter().map(|(_, t)| tv.encode(t)).collect(),
        src_len: sv.len(),
        tgt_len: tv.len(),
        tgt_vocab: tv,
    }
}

/// Desk-scale settings: the full-size initialisation and learning rate
/// learn too slowly at embedding 32 / hidden 64.
fn toy_configs(t: &ToyData, arch: Architecture) -> (ModelConfig, TrainConfig) {
    let mut c = ModelConfig::small(t.src_len, t.tgt_len, 32, 64).with_architecture(arch);
    c.init_scale = 0.1;
    c.dropout = 0.0;
    let tc = TrainConfig {
        learning_rate: 5e-3,
        batch_size: 32,
        ..TrainConfig::default()
    };
    (c, tc)
}

#[test]
fn c05_reversal_task() {
    let t0 = Instant::now();
    let t = prepare(Task::Reverse, 10_000, 1000, 1, (3, 12), 20);
    let (c, tc) = toy_configs(&t, Architecture::Abd);
    let mut trainer = Trainer::new(init_model(&c, 1).unwrap(), tc).unwrap();
    let dc = DecodeConfig::default();
    let mut history = Vec::new();
    let mut reached = None;
    for epoch in 1..=20 {
        trainer.train_epoch(&t.pairs, epoch, |_, _| Ok(())).unwrap();
        let out = translate_all(&trainer.model, &t.held_src, &dc, 1).unwrap();
        let hyps: Vec<Vec<usize>> = out.into_iter().map(|o| o.tokens).collect();
        let acc = sequence_accuracy(&hyps, &t.held_tgt).unwrap();
        history.push(format!("{:.1}", 100.0 * acc));
        if acc >= 0.98 {
            reached = Some(epoch);
            break;
        }
        if t0.elapsed() > Duration::from_secs(15 * 60) {
            break;
        }
    }
    let elapsed = t0.elapsed();
    report(
        5,
        "reversal task",
        reached.is_some() && elapsed < Duration::from_secs(15 * 60),
        format!(
            "held-out sequence accuracy by epoch [{}]%, {} in {:.0?}",
            history.join(", "),
            reached.map_or("never reached 98%".to_string(), |e| format!(
                "98% at epoch {e}"
            )),
            elapsed
        ),
    );
}

/// Corpus BLEU and final-marker accuracy on held-out suffix_checksum data.
fn checksum_run(arch: Architecture, seed: u64) -> (f64, f64) {
    let t = prepare(Task::SuffixChecksum, 5000, 1000, seed, (2, 6), 8);
    let (c, mut tc) = toy_configs(&t, arch);
    tc.epochs = 8;
    tc.seed = seed;
    let out = train(init_model(&c, seed).unwrap(), &t.pairs, None, &tc, |_| {
        Ok(())
    })
    .unwrap();
    let dc = DecodeConfig {
        mode: arch,
        ..DecodeConfig::default()
    };
    let hyps = translate_all(&out.best, &t.held_src, &dc, 1).unwrap();
    let marker = hyps
        .iter()
        .zip(&t.held_tgt)
        .filter(|(h, r)| h.tokens.last() == r.last())
        .count() as f64
        / hyps.len() as f64;
    let text: Vec<Vec<String>> = hyps
        .iter()
        .map(|h| t.tgt_vocab.decode(&h.tokens).unwrap())
        .collect();
    let refs: Vec<Vec<String>> = t
        .held_tgt
        .iter()
        .map(|r| t.tgt_vocab.decode(r).unwrap())
        .collect();
    (
        bleu(&text, &[refs], MAX_ORDER, false).unwrap().score,
        marker,
    )
}

#[test]
fn c06_directional_trend() {
    let seeds = [1u64, 2, 3];
    let mut rows = Vec::new();
    let (mut abd_b, mut abd_m, mut l2r_b, mut l2r_m) = (0.0, 0.0, 0.0, 0.0);
    for &s in &seeds {
        let (ab, am) = checksum_run(Architecture::Abd, s);
        let (lb, lm) = checksum_run(Architecture::L2r, s);
        rows.push(format!(
            "seed {s}: abd {:.2}/{:.1}% l2r {:.2}/{:.1}%",
            100.0 * ab,
            100.0 * am,
            100.0 * lb,
            100.0 * lm
        ));
        abd_b += ab / 3.0;
        abd_m += am / 3.0;
        l2r_b += lb / 3.0;
        l2r_m += lm / 3.0;
    }
    let ok = abd_b >= l2r_b && abd_m - l2r_m >= 0.02;
    report(
        6,
        "suffix_checksum trend",
        ok,
        format!(
            "mean BLEU abd {:.2} vs l2r {:.2}; marker accuracy abd {:.1}% vs l2r {:.1}% ({})",
            100.0 * abd_b,
            100.0 * l2r_b,
            100.0 * abd_m,
            100.0 * l2r_m,
            rows.join("; ")
        ),
    );
}

fn corpus_bleu(hyps: &[&str], refs: &[&[&str]], lowercase: bool) -> BleuReport {
    let h: Vec<Vec<String>> = hyps.iter().map(|s| words(s)).collect();
    let sets: Vec<Vec<Vec<String>>> = refs
        .iter()
        .map(|set| set.iter().map(|s| words(s)).collect())
        .collect();
    bleu(&h, &sets, MAX_ORDER, lowercase).unwrap()
}

#[test]
fn c07_bleu_oracle() {
    let mut fails = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() > tol {
            fails.push(format!("{name}: got {got}, want {want}"));
        }
    };
    check(
        "identical",
        corpus_bleu(
            &["the cat sat on the mat"],
            &[&["the cat sat on the mat"]],
            false,
        )
        .score,
        1.0,
        0.0,
    );
    check(
        "clipping p1",
        corpus_bleu(&["the the the the"], &[&["the cat the mat"]], false).precisions[0],
        0.5,
        0.0,
    );
    check(
        "brevity",
        corpus_bleu(&["a b c"], &[&["a b c d e f"]], false).brevity_penalty,
        (-1.0f64).exp(),
        1e-9,
    );

    // hand-computed corpora
    // p = 5/6, 3/5, 1/4, 0/3
    let a = corpus_bleu(
        &["the cat sat on the mat"],
        &[&["the cat is on the mat"]],
        false,
    );
    check("A p1", a.precisions[0], 5.0 / 6.0, 1e-12);
    check("A p2", a.precisions[1], 0.6, 1e-12);
    check("A p3", a.precisions[2], 0.25, 1e-12);
    check("A", a.score, 0.0, 1e-6);
    // totals 9/10, 7/8, 5/6, 3/4, equal lengths
    let b = corpus_bleu(
        &["a b c d e", "a b c d x"],
        &[&["a b c d e", "a b c d y"]],
        false,
    );
    check(
        "B",
        b.score,
        (0.9f64 * 0.875 * (5.0 / 6.0) * 0.75).powf(0.25),
        1e-6,
    );
    // every n-gram is found in one of the two references
    let c = corpus_bleu(&["a b c d e"], &[&["a b c d f"], &["z b c d e"]], false);
    check("C", c.score, 1.0, 1e-6);
    // all precisions 1, c = 4, r = 8
    let d = corpus_bleu(&["a b c d"], &[&["a b c d e f g h"]], false);
    check("D", d.score, (-1.0f64).exp(), 1e-6);
    // totals 10/10, 6/7, 3/4, 1/2 after lowercasing; c = 10, r = 11
    let hyps = ["The cat", "a b a a", "x y z w"];
    let refs: &[&str] = &["the cat", "a b a c a", "x y z w"];
    let e = corpus_bleu(&hyps, &[refs], true);
    check(
        "E",
        e.score,
        (-0.1f64).exp() * (6.0f64 / 7.0 * 0.75 * 0.5).powf(0.25),
        1e-6,
    );
    let e_cased = corpus_bleu(&hyps, &[refs], false);
    check(
        "E cased",
        e_cased.score,
        (-0.1f64).exp() * (0.9f64 * 5.0 / 7.0 * 0.75 * 0.5).powf(0.25),
        1e-6,
    );
    report(
        7,
        "BLEU oracle",
        fails.is_empty(),
        if fails.is_empty() {
            "3 cases + 5 hand-computed corpora".into()
        } else {
            fails.join("; ")
        },
    );
}

#[test]
fn c08_parameter_accounting() {
    let full = count_params(&ModelConfig::full_size(30_000, 30_000));
    let l2r =
        count_params(&ModelConfig::full_size(30_000, 30_000).with_architecture(Architecture::L2r));
    let (rf, rl) = (full as f64 / 130.0e6, l2r as f64 / 85.6e6);
    report(
        8,
        "parameter accounting",
        (rf - 1.0).abs() <= 0.1 && (rl - 1.0).abs() <= 0.1,
        format!(
            "two-phase {:.2}M ({:+.1}% vs 130.0M), left-to-right {:.2}M ({:+.1}% vs 85.6M)",
            full as f64 / 1e6,
            100.0 * (rf - 1.0),
            l2r as f64 / 1e6,
            100.0 * (rl - 1.0)
        ),
    );
}

fn short_training(seed: u64, dev: bool) -> (Vec<MetricRow>, Vec<u8>, Model<f32>) {
    let t = prepare(Task::Copy, 400, 20, 7, (2, 6), 10);
    let mut c = ModelConfig::small(t.src_len, t.tgt_len, 12, 16);
    c.dropout = 0.2;
    c.init_scale = 0.1;
    let tc = TrainConfig {
        learning_rate: 5e-3,
        batch_size: 40,
        epochs: 2,
        seed,
        eval_every: 5,
        dev_beam: 3,
        ..TrainConfig::default()
    };
    let refs: Vec<Vec<String>> = t
        .held_tgt
        .iter()
        .map(|r| t.tgt_vocab.decode(r).unwrap())
        .collect();
    let devset = DevSet {
        sources: t.held_src.clone(),
        reference_sets: vec![refs],
    };
    let d = dev.then_some((&devset, &t.tgt_vocab));
    let out = train(init_model(&c, seed).unwrap(), &t.pairs, d, &tc, |_| Ok(())).unwrap();
    let bytes = checkpoint::to_bytes(&out.best);
    (out.metrics, bytes, out.best)
}

#[test]
fn c09_persistence() {
    let (_, bytes, model) = short_training(3, false);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    let identical = checkpoint::to_bytes(&back) == bytes && std::fs::read(&path).unwrap() == bytes;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let probe: Vec<Vec<usize>> = (0..50)
        .map(|_| {
            (0..rng.random_range(1..8))
                .map(|_| rng.random_range(4..model.config.src_vocab))
                .collect()
        })
        .collect();
    let mut differing = 0;
    for mode in [Architecture::Abd, Architecture::R2l] {
        let dc = DecodeConfig {
            mode,
            ..DecodeConfig::default()
        };
        for s in &probe {
            if translate(&model, s, &dc).unwrap() != translate(&back, s, &dc).unwrap() {
                differing += 1;
            }
        }
    }
    report(
        9,
        "checkpoint round trip",
        identical && differing == 0,
        format!("{} bytes, bit-identical: {identical}; differing translations on 50-sentence probe: {differing}", bytes.len()),
    );
}

#[test]
fn c10_determinism() {
    let (m1, b1, _) = short_training(11, true);
    let (m2, b2, _) = short_training(11, true);
    let lines = |m: &[MetricRow]| m.iter().map(|r| r.to_string()).collect::<Vec<_>>();
    let (l1, l2) = (lines(&m1), lines(&m2));
    let evals = m1.iter().filter(|r| r.dev_bleu.is_some()).count();
    report(
        10,
        "determinism",
        l1 == l2 && b1 == b2 && evals > 0,
        format!(
            "{} metric lines ({evals} evaluations) identical: {}; best checkpoints identical: {}",
            l1.len(),
            l1 == l2,
            b1 == b2
        ),
    );
}
