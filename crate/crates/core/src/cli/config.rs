//! Flat `key = value` run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Model, training and path settings for a training run. Vocabulary sizes
/// in `model` are filled in once the vocabularies are built.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Vocabulary caps, specials included.
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub src: Option<PathBuf>,
    pub tgt: Option<PathBuf>,
    pub dev_src: Option<PathBuf>,
    pub dev_ref: Vec<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::full_size(30_000, 30_000),
            train: TrainConfig::default(),
            src_vocab_size: 30_000,
            tgt_vocab_size: 30_000,
            src: None,
            tgt: None,
            dev_src: None,
            dev_ref: Vec::new(),
            out: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "architecture",
    "embed_dim",
    "hidden_dim",
    "attn_dim",
    "readout_dim",
    "lambda",
    "detach_backward_trace",
    "share_target_embeddings",
    "dropout",
    "init_scale",
    "max_len_factor",
    "max_len_offset",
    "src_vocab_size",
    "tgt_vocab_size",
    "learning_rate",
    "batch_size",
    "clip_norm",
    "epochs",
    "max_len",
    "seed",
    "eval_every",
    "dev_beam",
    "rmsprop_rho",
    "rmsprop_eps",
    "plain_rmsprop",
    "threads",
    "src",
    "tgt",
    "dev_src",
    "dev_ref",
    "out",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Input(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Sets one key. `dev_ref` takes a comma-separated list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (m, t) = (&mut self.model, &mut self.train);
        match key {
            "architecture" => m.architecture = parse(key, value)?,
            "embed_dim" => m.embed_dim = parse(key, value)?,
            "hidden_dim" => m.hidden_dim = parse(key, value)?,
            "attn_dim" => m.attn_dim = parse(key, value)?,
            "readout_dim" => m.readout_dim = parse(key, value)?,
            "lambda" => m.lambda = parse(key, value)?,
            "detach_backward_trace" => m.detach_backward_trace = parse(key, value)?,
            "share_target_embeddings" => m.share_target_embeddings = parse(key, value)?,
            "dropout" => m.dropout = parse(key, value)?,
            "init_scale" => m.init_scale = parse(key, value)?,
            "max_len_factor" => m.max_len_factor = parse(key, value)?,
            "max_len_offset" => m.max_len_offset = parse(key, value)?,
            "src_vocab_size" => self.src_vocab_size = parse(key, value)?,
            "tgt_vocab_size" => self.tgt_vocab_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "clip_norm" => t.clip_norm = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "max_len" => t.max_len = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "dev_beam" => t.dev_beam = parse(key, value)?,
            "rmsprop_rho" => t.rmsprop.rho = parse(key, value)?,
            "rmsprop_eps" => t.rmsprop.eps = parse(key, value)?,
            "plain_rmsprop" => t.rmsprop.plain = parse(key, value)?,
            "threads" => t.threads = parse(key, value)?,
            "src" => self.src = Some(value.into()),
            "tgt" => self.tgt = Some(value.into()),
            "dev_src" => self.dev_src = Some(value.into()),
            "dev_ref" => {
                self.dev_ref = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "out" => self.out = Some(value.into()),
            _ => return Err(Error::Input(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a config file over the current values. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn apply_text(&mut self, path: &Path, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |msg: String| Error::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: {msg}", i + 1),
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| fail(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(path, &text)
    }

    /// The configuration as a config file.
    pub fn to_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let refs: Vec<String> = self
            .dev_ref
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        let entries: Vec<(&str, Option<String>)> = vec![
            ("architecture", Some(m.architecture.to_string())),
            ("embed_dim", Some(m.embed_dim.to_string())),
            ("hidden_dim", Some(m.hidden_dim.to_string())),
            ("attn_dim", Some(m.attn_dim.to_string())),
            ("readout_dim", Some(m.readout_dim.to_string())),
            ("lambda", Some(m.lambda.to_string())),
            (
                "detach_backward_trace",
                Some(m.detach_backward_trace.to_string()),
            ),
            (
                "share_target_embeddings",
                Some(m.share_target_embeddings.to_string()),
            ),
            ("dropout", Some(m.dropout.to_string())),
            ("init_scale", Some(m.init_scale.to_string())),
            ("max_len_factor", Some(m.max_len_factor.to_string())),
            ("max_len_offset", Some(m.max_len_offset.to_string())),
            ("src_vocab_size", Some(self.src_vocab_size.to_string())),
            ("tgt_vocab_size", Some(self.tgt_vocab_size.to_string())),
            ("learning_rate", Some(t.learning_rate.to_string())),
            ("batch_size", Some(t.batch_size.to_string())),
            ("clip_norm", Some(t.clip_norm.to_string())),
            ("epochs", Some(t.epochs.to_string())),
            ("max_len", Some(t.max_len.to_string())),
            ("seed", Some(t.seed.to_string())),
            ("eval_every", Some(t.eval_every.to_string())),
            ("dev_beam", Some(t.dev_beam.to_string())),
            ("rmsprop_rho", Some(t.rmsprop.rho.to_string())),
            ("rmsprop_eps", Some(t.rmsprop.eps.to_string())),
            ("plain_rmsprop", Some(t.rmsprop.plain.to_string())),
            ("threads", Some(t.threads.to_string())),
            ("src", path(&self.src)),
            ("tgt", path(&self.tgt)),
            ("dev_src", path(&self.dev_src)),
            ("dev_ref", (!refs.is_empty()).then(|| refs.join(","))),
            ("out", path(&self.out)),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| format!("{k} = {v}\n")))
            .collect()
    }
}
