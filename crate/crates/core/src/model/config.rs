use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which decoders a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Encoder, backward decoder and a forward decoder attending to both.
    Abd,
    /// Encoder and a single-context forward decoder.
    L2r,
    /// Encoder and the backward decoder alone.
    R2l,
}

impl Architecture {
    pub fn has_backward(self) -> bool {
        matches!(self, Architecture::Abd | Architecture::R2l)
    }

    pub fn has_forward(self) -> bool {
        matches!(self, Architecture::Abd | Architecture::L2r)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abd" => Ok(Architecture::Abd),
            "l2r" => Ok(Architecture::L2r),
            "r2l" => Ok(Architecture::R2l),
            other => Err(Error::Input(format!(
                "unknown architecture `{other}` (abd, l2r, r2l)"
            ))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Abd => "abd",
            Architecture::L2r => "l2r",
            Architecture::R2l => "r2l",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embed_dim: usize,
    /// Hidden size of each encoder direction and of both decoders.
    pub hidden_dim: usize,
    pub attn_dim: usize,
    /// Width of the readout's tanh layer.
    pub readout_dim: usize,
    /// Weight of the forward term in the joint objective.
    pub lambda: f64,
    /// Treat the backward trace as constants in the forward term.
    pub detach_backward_trace: bool,
    pub share_target_embeddings: bool,
    pub dropout: f64,
    pub architecture: Architecture,
    /// Standard deviation of the Gaussian initializer.
    pub init_scale: f64,
    /// Decode length cap: `max_len_factor · source_len + max_len_offset`.
    pub max_len_factor: usize,
    pub max_len_offset: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full_size(30_000, 30_000)
    }
}

impl ModelConfig {
    /// Full-size settings (620-d embeddings, 1000-d hidden states).
    pub fn full_size(src_vocab: usize, tgt_vocab: usize) -> Self {
        Self {
            src_vocab,
            tgt_vocab,
            embed_dim: 620,
            hidden_dim: 1000,
            attn_dim: 1000,
            readout_dim: 620,
            lambda: 0.7,
            detach_backward_trace: false,
            share_target_embeddings: true,
            dropout: 0.3,
            architecture: Architecture::Abd,
            init_scale: 0.01,
            max_len_factor: 2,
            max_len_offset: 10,
        }
    }

    /// Small model with attention and readout widths tied to the given dims.
    pub fn small(src_vocab: usize, tgt_vocab: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        Self {
            embed_dim,
            hidden_dim,
            attn_dim: hidden_dim,
            readout_dim: embed_dim,
            ..Self::full_size(src_vocab, tgt_vocab)
        }
    }

    pub fn with_architecture(mut self, arch: Architecture) -> Self {
        self.architecture = arch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Input(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Input(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        let dims = [
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attn_dim", self.attn_dim),
            ("readout_dim", self.readout_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Input(format!("{name} must be positive")));
            }
        }
        if self.src_vocab <= 4 || self.tgt_vocab <= 4 {
            return Err(Error::Input(
                "vocabularies must hold more than the 4 specials".into(),
            ));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Input("init_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn max_decode_len(&self, source_len: usize) -> usize {
        self.max_len_factor * source_len + self.max_len_offset
    }
}
