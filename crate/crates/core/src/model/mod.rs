//! Encoder, backward and forward decoders, and the joint objective.

mod config;
mod loss;
mod params;
mod passes;

pub use config::{Architecture, ModelConfig};
pub use loss::{JointLoss, LossOptions};
pub use params::{
    count_params, init_model, param_manifest, BackwardDecoder, ForwardDecoder, Layout, Model,
};
pub use passes::{
    argmax_allowed, Annotations, BackwardTrace, Dropout, SourceContext, TraceContext,
    BACKWARD_BANNED, FORWARD_BANNED,
};

#[cfg(test)]
mod tests;
