use std::fmt;

use super::batch::{make_batches, Batch};
use super::optimizer::{RmsProp, RmsPropConfig};
use crate::data::Vocabulary;
use crate::decoding::{translate_all, DecodeConfig, DEFAULT_BEAM};
use crate::error::{Error, Result};
use crate::eval::{bleu, MAX_ORDER};
use crate::model::{Dropout, LossOptions, Model};
use crate::numcore::{clip_global_norm, Graph};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub epochs: usize,
    /// Pairs with a longer side are dropped.
    pub max_len: usize,
    pub seed: u64,
    /// Evaluate on the dev set every this many updates; 0 means once per epoch.
    pub eval_every: usize,
    pub dev_beam: usize,
    pub rmsprop: RmsPropConfig,
    /// Worker threads for dev-set decoding.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 80,
            clip_norm: 1.0,
            epochs: 5,
            max_len: 50,
            seed: 1,
            eval_every: 0,
            dev_beam: DEFAULT_BEAM,
            rmsprop: RmsPropConfig::default(),
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("batch_size", self.batch_size as f64),
            ("epochs", self.epochs as f64),
            ("max_len", self.max_len as f64),
            ("dev_beam", self.dev_beam as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.rmsprop.rho) || !(self.rmsprop.eps > 0.0) {
            return Err(Error::Input(
                "rmsprop needs 0 <= rho < 1 and eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One metrics-log line: a training update, or a dev evaluation when
/// `dev_bleu` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub forward_nll: f64,
    pub backward_nll: f64,
    pub grad_norm: f64,
    pub dev_bleu: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch\tstep\tJ\tfwd_nll\tbwd_nll\tgrad_norm\tdev_bleu";

impl fmt::Display for MetricRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t",
            self.epoch, self.step, self.loss, self.forward_nll, self.backward_nll, self.grad_norm
        )?;
        match self.dev_bleu {
            Some(b) => write!(f, "{:.4}", 100.0 * b),
            None => f.write_str("-"),
        }
    }
}

/// Dev data: source ids and one or more tokenized reference sets.
#[derive(Debug, Clone)]
pub struct DevSet {
    pub sources: Vec<Vec<usize>>,
    pub reference_sets: Vec<Vec<Vec<String>>>,
}

/// Owns the model being trained and the optimizer state.
pub struct Trainer {
    pub model: Model<f32>,
    pub cfg: TrainConfig,
    pub optimizer: RmsProp<f32>,
    pub step: usize,
}

impl Trainer {
    pub fn new(model: Model<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let optimizer = RmsProp::new(&model.store, cfg.rmsprop);
        Ok(Self {
            model,
            cfg,
            optimizer,
            step: 0,
        })
    }

    fn dropout_seed(&self) -> u64 {
        self.cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.step as u64)
    }

    /// Loss, backprop, clipping and one optimizer update.
    pub fn train_step(&mut self, batch: &Batch, epoch: usize) -> Result<MetricRow> {
        let mut dropout = Dropout::new(self.model.config.dropout, self.dropout_seed());
        let (loss, grads) = {
            let mut g = Graph::new(&self.model.store);
            let loss = self.model.joint_loss(
                &mut g,
                &batch.sources,
                &batch.targets,
                &mut dropout,
                &LossOptions::default(),
            )?;
            let grads = g.backward(loss.total)?;
            (loss, grads)
        };
        self.model.store.zero_grads();
        grads.accumulate_into(&mut self.model.store)?;
        let grad_norm = clip_global_norm(&mut self.model.store, self.cfg.clip_norm)?;
        self.optimizer
            .update(&mut self.model.store, self.cfg.learning_rate)?;
        self.step += 1;
        Ok(MetricRow {
            epoch,
            step: self.step,
            loss: loss.value,
            forward_nll: loss.mean_forward_nll(),
            backward_nll: loss.mean_backward_nll(),
            grad_norm,
            dev_bleu: None,
        })
    }

    /// One pass over `pairs`, shuffled with `seed + epoch`.
    pub fn train_epoch(
        &mut self,
        pairs: &[(Vec<usize>, Vec<usize>)],
        epoch: usize,
        mut on_step: impl FnMut(&mut Self, &MetricRow) -> Result<()>,
    ) -> Result<()> {
        let batches = make_batches(
            pairs,
            self.cfg.batch_size,
            self.cfg.max_len,
            self.cfg.seed.wrapping_add(epoch as u64),
        )?;
        for b in &batches {
            let row = self.train_step(b, epoch)?;
            on_step(self, &row)?;
        }
        Ok(())
    }

    /// Corpus BLEU of the current model's translations of the dev set.
    pub fn dev_bleu(&self, dev: &DevSet, vocab: &Vocabulary) -> Result<f64> {
        dev_bleu(&self.model, dev, vocab, self.cfg.dev_beam, self.cfg.threads)
    }
}

/// Corpus BLEU of `model` on `dev`, decoding with the model's own architecture.
pub fn dev_bleu(
    model: &Model<f32>,
    dev: &DevSet,
    vocab: &Vocabulary,
    beam: usize,
    threads: usize,
) -> Result<f64> {
    let cfg = DecodeConfig {
        mode: model.config.architecture,
        beam,
        length_normalize: false,
    };
    let out = translate_all(model, &dev.sources, &cfg, threads)?;
    let hyps: Vec<Vec<String>> = out
        .iter()
        .map(|t| vocab.decode(&t.tokens))
        .collect::<Result<_>>()?;
    Ok(bleu(&hyps, &dev.reference_sets, MAX_ORDER, false)?.score)
}

pub struct TrainOutcome {
    /// Best model by dev BLEU, or the final one without a dev set.
    pub best: Model<f32>,
    pub best_dev_bleu: Option<f64>,
    pub metrics: Vec<MetricRow>,
}

/// Full training loop with dev-based model selection. `sink` receives every
/// metrics row as it is produced.
pub fn train(
    model: Model<f32>,
    pairs: &[(Vec<usize>, Vec<usize>)],
    dev: Option<(&DevSet, &Vocabulary)>,
    cfg: &TrainConfig,
    mut sink: impl FnMut(&MetricRow) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let mut metrics = Vec::new();
    let mut best: Option<(f64, Model<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        let batches = make_batches(
            pairs,
            cfg.batch_size,
            cfg.max_len,
            cfg.seed.wrapping_add(epoch as u64),
        )?;
        for (k, b) in batches.iter().enumerate() {
            let row = trainer.train_step(b, epoch)?;
            sink(&row)?;
            let due = match cfg.eval_every {
                0 => k + 1 == batches.len(),
                n => trainer.step % n == 0,
            };
            if let (true, Some((dev, vocab))) = (due, dev) {
                let score = trainer.dev_bleu(dev, vocab)?;
                let eval_row = MetricRow {
                    dev_bleu: Some(score),
                    ..row.clone()
                };
                sink(&eval_row)?;
                metrics.push(row);
                metrics.push(eval_row);
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, trainer.model.clone()));
                }
            } else {
                metrics.push(row);
            }
        }
    }
    let (best_dev_bleu, best) = match best {
        Some((s, m)) => (Some(s), m),
        None => (None, trainer.model),
    };
    Ok(TrainOutcome {
        best,
        best_dev_bleu,
        metrics,
    })
}
