use super::config::{Architecture, ModelConfig};
use crate::error::Result;
use crate::layers::{AttentionParams, EmbeddingTable, GruParams, Initializer, ReadoutParams};
use crate::numcore::{Component, ParamId, ParamStore, Real, Tensor2};

#[derive(Debug, Clone)]
pub struct BackwardDecoder {
    pub embedding: EmbeddingTable,
    pub init_w: ParamId,
    pub init_b: ParamId,
    pub gru: GruParams,
    pub attention: AttentionParams,
    pub readout: ReadoutParams,
}

#[derive(Debug, Clone)]
pub struct ForwardDecoder {
    pub embedding: EmbeddingTable,
    pub gru: GruParams,
    pub src_attention: AttentionParams,
    /// Present only when the decoder also attends to the backward trace.
    pub trace_attention: Option<AttentionParams>,
    pub readout: ReadoutParams,
}

/// Handles into the parameter store, one per layer.
#[derive(Debug, Clone)]
pub struct Layout {
    pub src_embedding: EmbeddingTable,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub backward: Option<BackwardDecoder>,
    pub forward: Option<ForwardDecoder>,
}

/// A model: its configuration, parameters and the layout over them.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub layout: Layout,
}

/// Builds a freshly initialized model. Deterministic per `(config, seed)`.
pub fn init_model<T: Real>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let mut store = ParamStore::new();
    let mut init = Initializer::new(seed, config.init_scale);
    let layout = register(&mut store, config, &mut init)?;
    Ok(Model {
        config: config.clone(),
        store,
        layout,
    })
}

fn register<T: Real>(
    store: &mut ParamStore<T>,
    c: &ModelConfig,
    init: &mut Initializer,
) -> Result<Layout> {
    let (e, d, a) = (c.embed_dim, c.hidden_dim, c.attn_dim);
    let src_embedding = EmbeddingTable::register(
        store,
        "enc.src_emb",
        Component::Encoder,
        c.src_vocab,
        e,
        init,
    )?;
    let enc_fwd = GruParams::register(store, "enc.fwd", Component::Encoder, e, d, &[], init)?;
    let enc_bwd = GruParams::register(store, "enc.bwd", Component::Encoder, e, d, &[], init)?;

    let shared =
        c.share_target_embeddings && c.architecture.has_backward() && c.architecture.has_forward();
    // A shared table is registered last; decoders hold this placeholder until then.
    let pending = EmbeddingTable {
        table: ParamId(usize::MAX),
        vocab: c.tgt_vocab,
        dim: e,
    };

    let backward = if c.architecture.has_backward() {
        let embedding = if shared {
            pending.clone()
        } else {
            EmbeddingTable::register(
                store,
                "bdec.tgt_emb",
                Component::Backward,
                c.tgt_vocab,
                e,
                init,
            )?
        };
        let init_w = store.add("bdec.init_w", Component::Backward, init.gaussian(d, d))?;
        let init_b = store.add("bdec.init_b", Component::Backward, Tensor2::zeros(1, d))?;
        let gru =
            GruParams::register(store, "bdec.gru", Component::Backward, e, d, &[2 * d], init)?;
        let attention =
            AttentionParams::register(store, "bdec.att", Component::Backward, d, 2 * d, a, init)?;
        let readout = ReadoutParams::register(
            store,
            "bdec.readout",
            Component::Backward,
            e + d + 2 * d,
            c.readout_dim,
            c.tgt_vocab,
            init,
        )?;
        Some(BackwardDecoder {
            embedding,
            init_w,
            init_b,
            gru,
            attention,
            readout,
        })
    } else {
        None
    };

    let forward = if c.architecture.has_forward() {
        let with_trace = c.architecture == Architecture::Abd;
        let embedding = if shared {
            pending
        } else {
            EmbeddingTable::register(
                store,
                "fdec.tgt_emb",
                Component::Forward,
                c.tgt_vocab,
                e,
                init,
            )?
        };
        let ctx_dims: Vec<usize> = if with_trace {
            vec![2 * d, d]
        } else {
            vec![2 * d]
        };
        let gru =
            GruParams::register(store, "fdec.gru", Component::Forward, e, d, &ctx_dims, init)?;
        let src_attention = AttentionParams::register(
            store,
            "fdec.att_src",
            Component::Forward,
            d,
            2 * d,
            a,
            init,
        )?;
        let trace_attention = if with_trace {
            Some(AttentionParams::register(
                store,
                "fdec.att_trace",
                Component::Forward,
                d,
                d,
                a,
                init,
            )?)
        } else {
            None
        };
        let concat = e + d + ctx_dims.iter().sum::<usize>();
        let readout = ReadoutParams::register(
            store,
            "fdec.readout",
            Component::Forward,
            concat,
            c.readout_dim,
            c.tgt_vocab,
            init,
        )?;
        Some(ForwardDecoder {
            embedding,
            gru,
            src_attention,
            trace_attention,
            readout,
        })
    } else {
        None
    };

    let mut layout = Layout {
        src_embedding,
        enc_fwd,
        enc_bwd,
        backward,
        forward,
    };
    if shared {
        let table = EmbeddingTable::register(
            store,
            "shared.tgt_emb",
            Component::Shared,
            c.tgt_vocab,
            e,
            init,
        )?;
        if let Some(b) = layout.backward.as_mut() {
            b.embedding = table.clone();
        }
        if let Some(f) = layout.forward.as_mut() {
            f.embedding = table;
        }
    }
    Ok(layout)
}

/// `(name, component, rows, cols)` for every parameter the configuration
/// declares, in store order, without allocating the weights.
pub fn param_manifest(c: &ModelConfig) -> Vec<(String, Component, usize, usize)> {
    let (e, d, a, r, vs, vt) = (
        c.embed_dim,
        c.hidden_dim,
        c.attn_dim,
        c.readout_dim,
        c.src_vocab,
        c.tgt_vocab,
    );
    let mut out = Vec::new();
    let mut push = |name: &str, comp: Component, rows: usize, cols: usize| {
        out.push((name.to_string(), comp, rows, cols))
    };
    let gru = |push: &mut dyn FnMut(&str, Component, usize, usize),
               prefix: &str,
               comp: Component,
               ctxs: &[usize]| {
        push(&format!("{prefix}.w_gates"), comp, e, 2 * d);
        push(&format!("{prefix}.w_cand"), comp, e, d);
        push(&format!("{prefix}.u_gates"), comp, d, 2 * d);
        push(&format!("{prefix}.u_cand"), comp, d, d);
        for (k, &cd) in ctxs.iter().enumerate() {
            push(&format!("{prefix}.c{k}_gates"), comp, cd, 2 * d);
            push(&format!("{prefix}.c{k}_cand"), comp, cd, d);
        }
        push(&format!("{prefix}.b_gates"), comp, 1, 2 * d);
        push(&format!("{prefix}.b_cand"), comp, 1, d);
    };
    let att = |push: &mut dyn FnMut(&str, Component, usize, usize),
               prefix: &str,
               comp: Component,
               q: usize,
               k: usize| {
        push(&format!("{prefix}.w_a"), comp, q, a);
        push(&format!("{prefix}.u_a"), comp, k, a);
        push(&format!("{prefix}.v_a"), comp, 1, a);
    };
    let readout = |push: &mut dyn FnMut(&str, Component, usize, usize),
                   prefix: &str,
                   comp: Component,
                   concat: usize| {
        push(&format!("{prefix}.ff_w"), comp, concat, r);
        push(&format!("{prefix}.ff_b"), comp, 1, r);
        push(&format!("{prefix}.out_w"), comp, r, vt);
        push(&format!("{prefix}.out_b"), comp, 1, vt);
    };

    push("enc.src_emb", Component::Encoder, vs, e);
    gru(&mut push, "enc.fwd", Component::Encoder, &[]);
    gru(&mut push, "enc.bwd", Component::Encoder, &[]);
    let arch = c.architecture;
    let shared = c.share_target_embeddings && arch.has_backward() && arch.has_forward();
    if arch.has_backward() {
        if !shared {
            push("bdec.tgt_emb", Component::Backward, vt, e);
        }
        push("bdec.init_w", Component::Backward, d, d);
        push("bdec.init_b", Component::Backward, 1, d);
        gru(&mut push, "bdec.gru", Component::Backward, &[2 * d]);
        att(&mut push, "bdec.att", Component::Backward, d, 2 * d);
        readout(&mut push, "bdec.readout", Component::Backward, e + 3 * d);
    }
    if arch.has_forward() {
        if !shared {
            push("fdec.tgt_emb", Component::Forward, vt, e);
        }
        let with_trace = arch == Architecture::Abd;
        let ctxs: Vec<usize> = if with_trace {
            vec![2 * d, d]
        } else {
            vec![2 * d]
        };
        gru(&mut push, "fdec.gru", Component::Forward, &ctxs);
        att(&mut push, "fdec.att_src", Component::Forward, d, 2 * d);
        if with_trace {
            att(&mut push, "fdec.att_trace", Component::Forward, d, d);
        }
        readout(
            &mut push,
            "fdec.readout",
            Component::Forward,
            e + d + ctxs.iter().sum::<usize>(),
        );
    }
    if shared {
        push("shared.tgt_emb", Component::Shared, vt, e);
    }
    out
}

/// Exact number of scalar weights a configuration declares.
pub fn count_params(c: &ModelConfig) -> usize {
    param_manifest(c).iter().map(|(_, _, r, k)| r * k).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(arch: Architecture, share: bool) -> ModelConfig {
        let mut c = ModelConfig::small(11, 11, 4, 6).with_architecture(arch);
        c.share_target_embeddings = share;
        c
    }

    #[test]
    fn manifest_matches_registered_store() {
        for arch in [Architecture::Abd, Architecture::L2r, Architecture::R2l] {
            for share in [true, false] {
                let c = tiny(arch, share);
                let m: Model<f32> = init_model(&c, 1).unwrap();
                let got: Vec<_> = m
                    .store
                    .iter()
                    .map(|p| (p.name.clone(), p.component, p.value.rows(), p.value.cols()))
                    .collect();
                assert_eq!(got, param_manifest(&c), "{arch} share={share}");
                assert_eq!(m.store.num_values(), count_params(&c));
            }
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let c = tiny(Architecture::Abd, true);
        let a: Model<f32> = init_model(&c, 3).unwrap();
        let b: Model<f32> = init_model(&c, 3).unwrap();
        assert_eq!(a.store, b.store);
        let d: Model<f32> = init_model(&c, 4).unwrap();
        assert_ne!(a.store, d.store);
    }

    #[test]
    fn init_statistics() {
        let c = ModelConfig::small(50, 50, 32, 40);
        let m: Model<f64> = init_model(&c, 0).unwrap();
        let w = &m.store.by_name("fdec.readout.ff_w").unwrap().value;
        let n = w.len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(
            mean.abs() < 1e-3 && (var.sqrt() - 0.01).abs() < 1e-3,
            "{mean} {var}"
        );
        let u = &m.store.by_name("enc.fwd.u_cand").unwrap().value;
        let utu = crate::numcore::matmul(&u.transpose(), u).unwrap();
        assert!(utu.max_abs_diff(&Tensor2::identity(40)) < 1e-10);
        assert!(m
            .store
            .by_name("bdec.init_b")
            .unwrap()
            .value
            .data()
            .iter()
            .all(|&x| x == 0.0));
        let emb = &m.store.by_name("shared.tgt_emb").unwrap().value;
        assert!(emb.row(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = tiny(Architecture::Abd, true);
        c.lambda = 1.5;
        assert!(init_model::<f32>(&c, 0).is_err());
        let mut c = tiny(Architecture::Abd, true);
        c.hidden_dim = 0;
        assert!(init_model::<f32>(&c, 0).is_err());
    }
}
