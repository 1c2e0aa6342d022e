use super::*;
use crate::data::{BOS_ID, EOS_ID};
use crate::numcore::{check_gradients, Component, GradCheckConfig, Graph, ParamStore, Tensor2};

fn tiny(arch: Architecture, scale: f64) -> ModelConfig {
    let mut c = ModelConfig::small(9, 10, 3, 4).with_architecture(arch);
    c.init_scale = scale;
    c.dropout = 0.0;
    c
}

fn model(arch: Architecture, scale: f64, seed: u64) -> Model<f64> {
    init_model(&tiny(arch, scale), seed).unwrap()
}

fn zero_param(m: &mut Model<f64>, name: &str) {
    let id = m.store.id(name).unwrap();
    m.store.get_mut(id).value.fill(0.0);
}

fn loss_value(
    m: &Model<f64>,
    store: &ParamStore<f64>,
    src: &[Vec<usize>],
    tgt: &[Vec<usize>],
) -> JointLoss {
    let mut g = Graph::new(store);
    m.joint_loss(
        &mut g,
        src,
        tgt,
        &mut Dropout::off(),
        &LossOptions::default(),
    )
    .unwrap()
}

#[test]
fn encode_single_token_matches_gru_composition() {
    let m = model(Architecture::Abd, 0.3, 1);
    let mut g = Graph::new(&m.store);
    let ann = m.encode(&mut g, &[vec![5]]).unwrap();
    let x = m.layout.src_embedding.lookup(&mut g, &[5]).unwrap();
    let zero = g.constant(Tensor2::zeros(1, 4));
    let f = m.layout.enc_fwd.step(&mut g, x, zero, &[]).unwrap();
    let b = m.layout.enc_bwd.step(&mut g, x, zero, &[]).unwrap();
    let want = g.concat_cols(&[f, b]).unwrap();
    assert_eq!(g.value(ann.h), g.value(want));
    assert_eq!(g.shape(ann.h), (1, 8));
}

#[test]
fn encode_rows_are_position_major_per_sentence() {
    let m = model(Architecture::Abd, 0.3, 2);
    let mut g = Graph::new(&m.store);
    let ann = m.encode(&mut g, &[vec![4, 5, 6], vec![7, 8]]).unwrap();
    assert_eq!(g.shape(ann.h), (6, 8));
    assert_eq!(ann.mask, vec![true, true, true, true, true, false]);
    let alone = m.encode(&mut g, &[vec![7, 8]]).unwrap();
    let (hb, ha) = (g.value(ann.h), g.value(alone.h));
    for i in 0..2 {
        assert_eq!(hb.row(3 + i), ha.row(i));
    }
}

#[test]
fn empty_source_is_rejected() {
    let m = model(Architecture::Abd, 0.3, 0);
    let mut g = Graph::new(&m.store);
    assert!(matches!(
        m.encode(&mut g, &[vec![]]),
        Err(crate::Error::Input(_))
    ));
}

#[test]
fn uniform_readout_gives_log_vocab_per_step() {
    let mut m = model(Architecture::Abd, 0.3, 3);
    for name in [
        "bdec.readout.out_w",
        "bdec.readout.out_b",
        "fdec.readout.out_w",
        "fdec.readout.out_b",
    ] {
        zero_param(&mut m, name);
    }
    let mut g = Graph::new(&m.store);
    let ann = m.encode(&mut g, &[vec![4, 5]]).unwrap();
    let src = m.source_context(&mut g, ann).unwrap();
    let (nll, states) = m
        .backward_teacher_forced(&mut g, &src, &[vec![6]], &mut Dropout::off())
        .unwrap();
    let want = 2.0 * (10f64).ln();
    assert!((g.scalar(nll) - want).abs() < 1e-12);
    assert_eq!(states.len(), 2);
    let trace = m.backward_greedy_trace(&mut g, &src, &[3], None).unwrap();
    let f = m
        .forward_teacher_forced(&mut g, &src, Some(&trace), &[vec![6]], &mut Dropout::off())
        .unwrap();
    assert!((g.scalar(f) - want).abs() < 1e-12);
}

#[test]
fn backward_teacher_forcing_matches_step_composition() {
    let m = model(Architecture::Abd, 0.3, 4);
    let target = vec![5, 6, 7];
    let mut g = Graph::new(&m.store);
    let ann = m.encode(&mut g, &[vec![4, 8]]).unwrap();
    let src = m.source_context(&mut g, ann).unwrap();
    let (nll, _) = m
        .backward_teacher_forced(&mut g, &src, &[target], &mut Dropout::off())
        .unwrap();
    let inputs = [EOS_ID, 7, 6, 5];
    let gold = [7, 6, 5, BOS_ID];
    let mut s = m.backward_initial_state(&mut g, &src.ann).unwrap();
    let mut total = 0.0;
    for (&x, &y) in inputs.iter().zip(&gold) {
        let (next, lp) = m
            .backward_step(&mut g, &src, s, &[x], &mut Dropout::off())
            .unwrap();
        total -= g.value(lp).get(0, y);
        s = next;
    }
    assert!((g.scalar(nll) - total).abs() < 1e-12);
}

#[test]
fn forward_teacher_forcing_matches_step_composition() {
    let m = model(Architecture::Abd, 0.3, 5);
    let target = vec![5, 6];
    let mut g = Graph::new(&m.store);
    let ann = m.encode(&mut g, &[vec![4, 8, 7]]).unwrap();
    let src = m.source_context(&mut g, ann).unwrap();
    let trace = m.backward_greedy_trace(&mut g, &src, &[4], None).unwrap();
    let nll = m
        .forward_teacher_forced(&mut g, &src, Some(&trace), &[target], &mut Dropout::off())
        .unwrap();
    let ctx = m.trace_context(&mut g, &trace).unwrap().unwrap();
    let mut s = src.ann.first_backward;
    let mut total = 0.0;
    for (&x, &y) in [BOS_ID, 5, 6].iter().zip(&[5, 6, EOS_ID]) {
        let (next, lp) = m
            .forward_step(&mut g, &src, Some(&ctx), s, &[x], &mut Dropout::off())
            .unwrap();
        total -= g.value(lp).get(0, y);
        s = next;
    }
    assert!((g.scalar(nll) - total).abs() < 1e-12);
}

#[test]
fn single_state_trace_is_the_trace_context() {
    let m = model(Architecture::Abd, 0.3, 6);
    let mut g = Graph::new(&m.store);
    let ann = m.encode(&mut g, &[vec![4, 5]]).unwrap();
    let src = m.source_context(&mut g, ann).unwrap();
    let trace = m.backward_greedy_trace(&mut g, &src, &[1], None).unwrap();
    assert_eq!(trace.steps, 1);
    let dec = m.layout.forward.as_ref().unwrap();
    let att = dec.trace_attention.as_ref().unwrap();
    let keys = att.project_keys(&mut g, trace.states).unwrap();
    let q = g.constant(Tensor2::filled(1, 4, 0.7));
    let ctx = att
        .attend(&mut g, q, keys, trace.states, &trace.mask, 1)
        .unwrap();
    assert!(g.value(ctx).max_abs_diff(g.value(trace.states)) < 1e-15);
}

#[test]
fn greedy_trace_replays_as_argmax() {
    for seed in 0..4 {
        let m = model(Architecture::Abd, 0.5, seed);
        let mut g = Graph::new(&m.store);
        let ann = m.encode(&mut g, &[vec![4, 5, 6], vec![7]]).unwrap();
        let src = m.source_context(&mut g, ann).unwrap();
        let trace = m
            .backward_greedy_trace(&mut g, &src, &[5, 3], None)
            .unwrap();
        for (b, toks) in trace.tokens.iter().enumerate() {
            let limit = [5, 3][b];
            assert!(!toks.is_empty() && toks.len() <= limit);
            assert_eq!(trace.terminated[b], toks.last() == Some(&BOS_ID));
            if !trace.terminated[b] {
                assert_eq!(toks.len(), limit);
            }
            let one = m
                .encode(&mut g, &[[vec![4, 5, 6], vec![7]][b].clone()])
                .unwrap();
            let one = m.source_context(&mut g, one).unwrap();
            let mut s = m.backward_initial_state(&mut g, &one.ann).unwrap();
            let mut prev = EOS_ID;
            for &t in toks {
                let (next, lp) = m
                    .backward_step(&mut g, &one, s, &[prev], &mut Dropout::off())
                    .unwrap();
                assert_eq!(argmax_allowed(g.value(lp).row(0), &BACKWARD_BANNED), t);
                prev = t;
                s = next;
            }
        }
        let count: usize = trace.mask.iter().filter(|&&x| x).count();
        assert_eq!(count, trace.lengths().iter().sum::<usize>());
    }
}

#[test]
fn argmax_skips_banned_and_prefers_lowest_id() {
    assert_eq!(argmax_allowed(&[9.0, 1.0, 3.0, 3.0], &[0]), 2);
    assert_eq!(argmax_allowed(&[9.0, 1.0, 3.0, 3.0], &[0, 2]), 3);
}

#[test]
fn lambda_endpoints() {
    let src = vec![vec![4, 5, 6], vec![7, 8]];
    let tgt = vec![vec![5, 6], vec![7, 8, 9]];
    let mut m = model(Architecture::Abd, 0.3, 7);
    m.config.lambda = 1.0;
    let l = loss_value(&m, &m.store, &src, &tgt);
    assert_eq!(l.value, l.forward_nll / 2.0);
    m.config.lambda = 0.0;
    let l = loss_value(&m, &m.store, &src, &tgt);
    assert_eq!(l.value, l.backward_nll / 2.0);
    m.config.lambda = 0.7;
    let l = loss_value(&m, &m.store, &src, &tgt);
    assert!((l.value - (0.7 * l.mean_forward_nll() + 0.3 * l.mean_backward_nll())).abs() < 1e-12);
}

fn grads(m: &Model<f64>, src: &[Vec<usize>], tgt: &[Vec<usize>]) -> ParamStore<f64> {
    let mut g = Graph::new(&m.store);
    let l = m
        .joint_loss(
            &mut g,
            src,
            tgt,
            &mut Dropout::off(),
            &LossOptions::default(),
        )
        .unwrap();
    let gr = g.backward(l.total).unwrap();
    let mut store = m.store.clone();
    store.zero_grads();
    gr.accumulate_into(&mut store).unwrap();
    store
}

#[test]
fn zero_lambda_leaves_forward_parameters_untouched() {
    let mut m = model(Architecture::Abd, 0.3, 8);
    m.config.lambda = 0.0;
    let s = grads(&m, &[vec![4, 5]], &[vec![6, 7]]);
    for p in s.iter() {
        let zero = p.grad.data().iter().all(|&x| x == 0.0);
        assert_eq!(zero, p.component == Component::Forward, "{}", p.name);
    }
}

#[test]
fn detached_trace_isolates_backward_readout() {
    let mut m = model(Architecture::Abd, 0.3, 9);
    m.config.lambda = 1.0;
    m.config.detach_backward_trace = true;
    let s = grads(&m, &[vec![4, 5]], &[vec![6, 7]]);
    for p in s.iter().filter(|p| p.name.starts_with("bdec.readout")) {
        assert!(p.grad.data().iter().all(|&x| x == 0.0), "{}", p.name);
    }
    m.config.detach_backward_trace = false;
    let s = grads(&m, &[vec![4, 5]], &[vec![6, 7]]);
    assert!(s
        .iter()
        .any(|p| p.name.starts_with("bdec.gru") && p.grad.sum_sq() > 0.0));
}

#[test]
fn detached_trace_matches_constant_trace() {
    let mut m = model(Architecture::Abd, 0.3, 10);
    m.config.detach_backward_trace = true;
    let (src, tgt) = (vec![vec![4, 5, 6]], vec![vec![6, 7]]);
    let via_loss = grads(&m, &src, &tgt);

    let mut g = Graph::new(&m.store);
    let ann = m.encode(&mut g, &src).unwrap();
    let sc = m.source_context(&mut g, ann).unwrap();
    let mut trace = m.backward_greedy_trace(&mut g, &sc, &[16], None).unwrap();
    trace.states = g.constant(g.value(trace.states).clone());
    let f = m
        .forward_teacher_forced(&mut g, &sc, Some(&trace), &tgt, &mut Dropout::off())
        .unwrap();
    let f = g.scale(f, m.config.lambda);
    let gr = g.backward(f).unwrap();
    let mut manual = m.store.clone();
    manual.zero_grads();
    gr.accumulate_into(&mut manual).unwrap();
    for (a, b) in via_loss.iter().zip(manual.iter()) {
        if a.component == Component::Forward {
            assert!(a.grad.max_abs_diff(&b.grad) < 1e-14, "{}", a.name);
        }
    }
}

#[test]
fn batching_equals_sum_of_single_sentences() {
    let m = model(Architecture::Abd, 0.3, 11);
    let src = vec![vec![4, 5, 6, 7], vec![8], vec![5, 5]];
    let tgt = vec![vec![6], vec![7, 8, 9, 4], vec![5, 6]];
    let batch = loss_value(&m, &m.store, &src, &tgt);
    let (mut f, mut b) = (0.0, 0.0);
    for (s, t) in src.iter().zip(&tgt) {
        let l = loss_value(
            &m,
            &m.store,
            std::slice::from_ref(s),
            std::slice::from_ref(t),
        );
        f += l.forward_nll;
        b += l.backward_nll;
    }
    assert!((batch.forward_nll - f).abs() < 1e-10);
    assert!((batch.backward_nll - b).abs() < 1e-10);
}

#[test]
fn baselines_use_their_single_objective() {
    let (src, tgt) = (vec![vec![4, 5]], vec![vec![6, 7]]);
    let l2r = model(Architecture::L2r, 0.3, 12);
    let l = loss_value(&l2r, &l2r.store, &src, &tgt);
    assert!(l.trace.is_none() && l.backward_nll == 0.0 && l.value == l.forward_nll);
    let r2l = model(Architecture::R2l, 0.3, 12);
    let l = loss_value(&r2l, &r2l.store, &src, &tgt);
    assert!(l.forward_nll == 0.0 && l.value == l.backward_nll);
}

fn gradcheck(arch: Architecture, detach: bool) {
    let mut m = model(arch, 0.5, 13);
    m.config.detach_backward_trace = detach;
    let src = vec![vec![4, 5, 6], vec![7, 8]];
    let tgt = vec![vec![5, 6], vec![7, 8, 9]];
    // Token choices and, when detached, the trace states stay at their
    // values for the unperturbed parameters.
    let mut g = Graph::new(&m.store);
    let base = m
        .joint_loss(
            &mut g,
            &src,
            &tgt,
            &mut Dropout::off(),
            &LossOptions::default(),
        )
        .unwrap();
    let forced = base.trace.as_ref().map(|t| t.tokens.clone());
    let states = base.trace.as_ref().map(|t| g.value(t.states).clone());
    let opts = LossOptions {
        forced_trace: forced.as_deref(),
        fixed_trace_states: if detach { states.as_ref() } else { None },
    };
    let report = check_gradients(
        &m.store,
        |s| {
            let mut g = Graph::new(s);
            Ok(
                m.joint_loss(&mut g, &src, &tgt, &mut Dropout::off(), &opts)?
                    .value,
            )
        },
        |s| {
            let gr = {
                let mut g = Graph::new(s);
                let l = m.joint_loss(&mut g, &src, &tgt, &mut Dropout::off(), &opts)?;
                g.backward(l.total)?
            };
            gr.accumulate_into(s)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    let bad: Vec<_> = report
        .failures()
        .map(|p| (&p.name, p.max_rel_err, p.worst))
        .collect();
    assert!(report.passed(), "{arch} detach={detach}: {bad:?}");
}

#[test]
fn joint_loss_gradients_match_finite_differences() {
    gradcheck(Architecture::Abd, false);
    gradcheck(Architecture::Abd, true);
}

#[test]
fn baseline_gradients_match_finite_differences() {
    gradcheck(Architecture::L2r, false);
    gradcheck(Architecture::R2l, false);
}
