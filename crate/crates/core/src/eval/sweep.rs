use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{init_model, ModelConfig};
use crate::training::{train, DevSet, TrainConfig};

/// λ values from 0.5 to 1.0 in steps of 0.1.
pub fn default_lambda_grid() -> Vec<f64> {
    (5..=10).map(|k| k as f64 / 10.0).collect()
}

/// Trains one model per λ from the same seed and reports the best dev BLEU
/// of each, ordered by λ ascending.
pub fn lambda_sweep(
    pairs: &[(Vec<usize>, Vec<usize>)],
    dev: &DevSet,
    tgt_vocab: &Vocabulary,
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    grid: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::Input("empty lambda grid".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut rows = Vec::with_capacity(grid.len());
    for lambda in grid {
        let cfg = ModelConfig {
            lambda,
            ..model.clone()
        };
        let out = train(
            init_model(&cfg, seed)?,
            pairs,
            Some((dev, tgt_vocab)),
            train_cfg,
            |_| Ok(()),
        )?;
        let score = out.best_dev_bleu.unwrap_or(0.0);
        log::info!("lambda {lambda:.2}: dev BLEU {:.2}", 100.0 * score);
        rows.push((lambda, score));
    }
    Ok(rows)
}
