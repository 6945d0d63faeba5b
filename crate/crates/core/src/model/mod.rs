//! Encoder, component prediction head and template-guided hybrid decoder.

mod checkpoint;
mod config;
mod features;
mod generate;
mod net;
mod params;
mod train;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use features::pseudo_image_feature;
pub use generate::{
    decode_step, encode_document, generate, predict_components, select_alpha, EncodedDocument,
    GenerateOptions, Generation, Mode, StepOutput,
};
pub use net::{alpha_tensor, blend_components, DecoderNodes, Memories, ModelInput, Net, ZeroOut};
pub use params::{param_shapes, ModelParams};
pub use train::{
    batch_gradients, fit, loss_graph, no_entities, teacher_forced_accuracy, train_step,
    EpochStat, FitConfig, LossGraph, StepLoss,
};
